#include "groundrag/prompt.hpp"

#include <algorithm>

#include "groundrag/errors.hpp"

namespace groundrag::generation {

namespace {

constexpr std::string_view kContext = "{context}";
constexpr std::string_view kQuestion = "{question}";

std::size_t count_of(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

PromptTemplate make_builtin(ingest::Language lang) {
    using ingest::Language;
    switch (lang) {
        case Language::en:
            return PromptTemplate::create(
                "grounded-en", lang,
                "You are an assistant for agricultural decision support. Answer only from the "
                "numbered sources in the context. Cite sources as [S1], [S2] after the statements "
                "they support. If the sources do not contain the answer, say so plainly.",
                "Context:\n{context}\nQuestion: {question}\nAnswer in English.",
                "No supporting documents were found for this question. State that no supporting "
                "documents were found and do not guess.");
        case Language::sv:
            return PromptTemplate::create(
                "grounded-sv", lang,
                "Du är en assistent för beslutsstöd inom jordbruket. Svara endast utifrån de "
                "numrerade källorna i kontexten. Ange källor som [S1], [S2] efter de påståenden de "
                "stöder. Om källorna inte innehåller svaret, säg det tydligt.",
                "Kontext:\n{context}\nFråga: {question}\nSvara på svenska.",
                "Inga stödjande dokument hittades för frågan. Säg att inga stödjande dokument "
                "hittades och gissa inte.");
        case Language::fi:
        case Language::unknown:
            break;
    }
    return PromptTemplate::create(
        "grounded-fi", Language::fi,
        "Olet maatalouden päätöksentekoa tukeva avustaja. Vastaa vain kontekstin numeroitujen "
        "lähteiden perusteella. Merkitse lähteet muodossa [S1], [S2] niiden väitteiden perään, "
        "joita ne tukevat. Jos lähteet eivät sisällä vastausta, kerro se suoraan.",
        "Konteksti:\n{context}\nKysymys: {question}\nVastaa suomeksi.",
        "Kysymykseen ei löytynyt tukevia asiakirjoja. Kerro, ettei tukevia asiakirjoja löytynyt, "
        "äläkä arvaa.");
}

}  // namespace

PromptTemplate PromptTemplate::create(std::string template_id, ingest::Language language,
                                      std::string system_text, std::string user_frame,
                                      std::string no_context_text) {
    for (auto placeholder : {kContext, kQuestion}) {
        const auto n = count_of(user_frame, placeholder);
        if (n != 1) {
            throw Error(ErrorKind::template_error,
                        "template '" + template_id + "' must contain " + std::string(placeholder) +
                            " exactly once (found " + std::to_string(n) + ")");
        }
    }
    if (no_context_text.empty()) {
        throw Error(ErrorKind::template_error, "template '" + template_id + "' has no no-context text");
    }
    PromptTemplate t;
    t.template_id_ = std::move(template_id);
    t.language_ = language;
    t.system_text_ = std::move(system_text);
    t.user_frame_ = std::move(user_frame);
    t.no_context_text_ = std::move(no_context_text);
    return t;
}

const PromptTemplate& builtin_template(ingest::Language language) {
    static const PromptTemplate fi = make_builtin(ingest::Language::fi);
    static const PromptTemplate sv = make_builtin(ingest::Language::sv);
    static const PromptTemplate en = make_builtin(ingest::Language::en);
    switch (language) {
        case ingest::Language::sv: return sv;
        case ingest::Language::en: return en;
        default: return fi;
    }
}

RenderedPrompt render_prompt(const retrieval::ContextBundle& bundle, std::string_view question,
                             const PromptTemplate& tmpl) {
    const bool blank = std::all_of(question.begin(), question.end(),
                                   [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
    if (blank) throw Error(ErrorKind::empty_query, "question is blank");

    const std::string_view frame = tmpl.user_frame();
    const std::string_view context =
        bundle.no_context ? std::string_view(tmpl.no_context_text()) : std::string_view(bundle.context_text);

    const auto ctx_pos = frame.find(kContext);
    const auto q_pos = frame.find(kQuestion);
    struct Slot {
        std::size_t pos;
        std::size_t len;
        std::string_view value;
    };
    Slot first{ctx_pos, kContext.size(), context};
    Slot second{q_pos, kQuestion.size(), question};
    if (second.pos < first.pos) std::swap(first, second);

    std::string user;
    user.reserve(frame.size() + context.size() + question.size());
    user.append(frame.substr(0, first.pos));
    user.append(first.value);
    user.append(frame.substr(first.pos + first.len, second.pos - first.pos - first.len));
    user.append(second.value);
    user.append(frame.substr(second.pos + second.len));
    return {tmpl.system_text(), std::move(user)};
}

}  // namespace groundrag::generation
