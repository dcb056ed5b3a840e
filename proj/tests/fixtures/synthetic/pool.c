#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "pool.h"

void pool_init(struct pool *pool)
{
    memset(pool, 0, sizeof(*pool));
}

int pool_total(const struct pool *pool)
{
    return pool->count;
}

struct chksum *pool_get_chksum(struct pool *pool, int idx)
{
    struct chksum *c = &pool->chksums[idx];
    return c;
}

struct chksum *chksum_create(int type)
{
    struct chksum *chk = calloc(1, sizeof(*chk));
    if (chk == NULL)
        return NULL;
    chk->type = type;
    return chk;
}

int report_usage(int type)
{
    struct chksum *chk = chksum_create(type);
    if (chk == NULL)
        return -1;
    printf("chksum type %d ready\n", chk->type);
    return 0;
}

void flaky_reset(struct pool *pool, int keep)
{
    char *scratch = malloc(64);
    if (scratch == NULL)
        return;
    snprintf(scratch, 64, "pool with %d entries", pool->count);
    if (!keep)
        free(scratch);
}
