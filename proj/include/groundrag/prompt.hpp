#pragma once

#include <string>
#include <string_view>

#include "groundrag/ingest.hpp"
#include "groundrag/retrieval.hpp"

namespace groundrag::generation {

class PromptTemplate {
 public:
    // Throws Error(template_error) unless user_frame contains {context} and
    // {question} exactly once each.
    static PromptTemplate create(std::string template_id, ingest::Language language,
                                 std::string system_text, std::string user_frame,
                                 std::string no_context_text);

    const std::string& template_id() const noexcept { return template_id_; }
    ingest::Language language() const noexcept { return language_; }
    const std::string& system_text() const noexcept { return system_text_; }
    const std::string& user_frame() const noexcept { return user_frame_; }
    // Substituted for {context} when no source made it into the bundle.
    const std::string& no_context_text() const noexcept { return no_context_text_; }

 private:
    PromptTemplate() = default;

    std::string template_id_;
    ingest::Language language_ = ingest::Language::unknown;
    std::string system_text_;
    std::string user_frame_;
    std::string no_context_text_;
};

// fi, sv and en share one structure; unknown falls back to fi.
const PromptTemplate& builtin_template(ingest::Language language);

struct RenderedPrompt {
    std::string system_text;
    std::string user_text;
};

// Substitution is single-pass: placeholder-like text inside the question or
// the context is left alone.
RenderedPrompt render_prompt(const retrieval::ContextBundle& bundle, std::string_view question,
                             const PromptTemplate& tmpl);

}  // namespace groundrag::generation
