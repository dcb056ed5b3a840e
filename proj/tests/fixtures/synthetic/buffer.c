#include <stdlib.h>
#include <string.h>

#include "buffer.h"

char *make_buffer(size_t len)
{
    char *p = malloc(len);
    if (p == NULL)
        return NULL;
    memset(p, 0, len);
    return p;
}

void buffer_free(char *buf)
{
    free(buf);
}

size_t buffer_len(const char *buf)
{
    return buf ? strlen(buf) : 0;
}

int copy_small(const char *src)
{
    char *tmp = malloc(16);
    if (tmp == NULL)
        return -1;
    strncpy(tmp, src, 15);
    tmp[15] = '\0';
    free(tmp);
    return 0;
}

int sum_ints(const int *xs, int n)
{
    int total = 0;
    for (int i = 0; i < n; i++)
        total += xs[i];
    return total;
}

int max_int(int a, int b)
{
    return a > b ? a : b;
}
