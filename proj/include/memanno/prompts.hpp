#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memanno/ingest.hpp"

namespace memanno {

enum class PromptKind { Initial, PostFilter };

struct PromptText {
    std::string text;
    PromptKind kind = PromptKind::Initial;
    std::string function_id;
};

/// The two query templates, loaded from `initial.txt` and `postfilter.txt`
/// in a template directory. Kept as external assets so they can be diffed
/// and swapped without rebuilding.
struct PromptTemplates {
    std::string initial;
    std::string postfilter;
};

PromptTemplates load_prompt_templates(const std::filesystem::path& dir);

/// First query: asks which variables hold newly allocated / freed memory.
/// `{code}` receives the context bodies (in order) and then the target's
/// body, blank-line separated.
PromptText render_initial_prompt(const PromptTemplates& templates,
                                 const FunctionRecord& function,
                                 const std::vector<const FunctionRecord*>& context);

/// Follow-up query: asks whether the returned pointer aliases into the
/// structure argument. `{source}` receives the target's body first, then the
/// context bodies. `variable_name` must name one of the target's params.
PromptText render_postfilter_prompt(const PromptTemplates& templates,
                                    const FunctionRecord& function,
                                    const std::vector<const FunctionRecord*>& context,
                                    const std::string& structure,
                                    const std::string& variable_name);

} // namespace memanno
