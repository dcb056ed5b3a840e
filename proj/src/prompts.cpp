#include "memanno/prompts.hpp"

#include <algorithm>

#include "memanno/errors.hpp"
#include "memanno/util.hpp"

namespace memanno {

namespace {

std::string joined_bodies(const std::vector<std::string_view>& bodies) {
    std::string out;
    for (const auto& b : bodies) {
        if (!out.empty()) out += "\n\n";
        out += b;
    }
    return out;
}

} // namespace

PromptTemplates load_prompt_templates(const std::filesystem::path& dir) {
    PromptTemplates t;
    t.initial = read_file(dir / "initial.txt");
    t.postfilter = read_file(dir / "postfilter.txt");
    return t;
}

PromptText render_initial_prompt(const PromptTemplates& templates,
                                 const FunctionRecord& function,
                                 const std::vector<const FunctionRecord*>& context) {
    std::vector<std::string_view> bodies;
    for (const auto* c : context) bodies.push_back(c->body);
    bodies.push_back(function.body);

    std::string text = templates.initial;
    replace_all(text, "{func_name}", function.name);
    replace_all(text, "{code}", joined_bodies(bodies));

    PromptText out;
    out.text = std::move(text);
    out.kind = PromptKind::Initial;
    out.function_id = function.id;
    return out;
}

PromptText render_postfilter_prompt(const PromptTemplates& templates,
                                    const FunctionRecord& function,
                                    const std::vector<const FunctionRecord*>& context,
                                    const std::string& structure,
                                    const std::string& variable_name) {
    bool is_param = std::any_of(function.params.begin(), function.params.end(),
                                [&](const Param& p) { return p.name == variable_name; });
    if (!is_param) {
        throw usage_error("post-filter variable '" + variable_name +
                          "' is not a parameter of " + function.name);
    }

    std::vector<std::string_view> bodies{function.body};
    for (const auto* c : context) bodies.push_back(c->body);

    std::string text = templates.postfilter;
    replace_all(text, "{func_name}", function.name);
    replace_all(text, "{structure}", structure);
    replace_all(text, "{variable_name}", variable_name);
    replace_all(text, "{source}", joined_bodies(bodies));

    PromptText out;
    out.text = std::move(text);
    out.kind = PromptKind::PostFilter;
    out.function_id = function.id;
    return out;
}

} // namespace memanno
