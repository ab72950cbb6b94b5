#include "kedit/edit_eval.hpp"

#include "kedit/error.hpp"
#include "kedit/tokenizer.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace kedit {

std::string MetricsReport::csv_header() {
    return "label,succ,gen,port,loc,flu,ppl,em,f1,fingerprint";
}

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << label << "," << edit_success << "," << generalization << ","
       << portability << "," << locality << "," << fluency << "," << general_ppl << "," << qa_em << "," << qa_f1
       << "," << fingerprint;
    return os.str();
}

std::string MetricsReport::to_json() const {
    nlohmann::json j{{"label", label},
                     {"edit_success", edit_success},
                     {"generalization", generalization},
                     {"portability", portability},
                     {"locality", locality},
                     {"fluency", fluency},
                     {"general_ppl", general_ppl},
                     {"qa_em", qa_em},
                     {"qa_f1", qa_f1},
                     {"fingerprint", fingerprint}};
    return j.dump();
}

double token_match_score(std::span<const int> pred, std::span<const int> target) {
    if (target.empty()) {
        throw InputError("token_match_score: target is empty");
    }
    std::size_t hits = 0;
    for (std::size_t t = 0; t < target.size(); ++t) {
        if (t < pred.size() && pred[t] == target[t]) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(target.size());
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

int exact_match(std::string_view pred, std::string_view truth) {
    return normalize_answer(pred) == normalize_answer(truth) ? 1 : 0;
}

static std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream is{std::string(text)};
    std::string w;
    while (is >> w) {
        out.push_back(w);
    }
    return out;
}

double f1_score(std::string_view pred, std::string_view truth) {
    const auto p = split_ws(normalize_answer(pred));
    const auto t = split_ws(normalize_answer(truth));
    if (p.empty() || t.empty()) {
        return 0.0;
    }
    std::map<std::string, int> counts;
    for (const auto & w : t) {
        ++counts[w];
    }
    std::size_t overlap = 0;
    for (const auto & w : p) {
        auto it = counts.find(w);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) {
        return 0.0;
    }
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(t.size());
    return 2.0 * precision * recall / (precision + recall);
}

static double ngram_entropy(const std::vector<std::string> & tokens, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    const std::size_t total = tokens.size() + 1 - n;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    double h = 0.0;
    for (const auto & [_, c] : counts) {
        const double f = static_cast<double>(c) / static_cast<double>(total);
        h -= f * std::log2(f);
    }
    return h;
}

double ngram_entropy_fluency(const std::vector<std::string> & tokens) {
    if (tokens.size() < 3) {
        return 0.0;
    }
    return ngram_entropy(tokens, 2) / 3.0 + 2.0 * ngram_entropy(tokens, 3) / 3.0;
}

double ngram_entropy_fluency(std::string_view text) {
    return ngram_entropy_fluency(split_ws(text));
}

namespace {

double answer_score(const TinyLm & m, const std::string & question, const std::string & expected,
                    const EvalOptions & opts, std::vector<int> * decoded = nullptr) {
    const auto out = m.greedy_decode(encode_prompt(question), opts.max_new);
    if (decoded) {
        *decoded = out;
    }
    return token_match_score(out, encode_text(expected));
}

// Character tokens of a decoded continuation, for the fluency metric.
std::vector<std::string> char_tokens(const std::vector<int> & ids) {
    std::vector<std::string> out;
    for (int id : ids) {
        out.push_back(std::to_string(id));
    }
    return out;
}

}  // namespace

MetricsReport evaluate_editing(const TinyLm & edited, const TinyLm & base, const EditDataset & data,
                               const EvalOptions & opts) {
    if (edited.config().fingerprint() != base.config().fingerprint()) {
        throw ConfigError("evaluate_editing: edited and base models have different configurations");
    }
    if (data.empty()) {
        throw InputError("evaluate_editing: dataset is empty");
    }
    double succ = 0, gen = 0, port = 0, loc = 0, flu = 0;
    std::size_t n_gen = 0, n_loc = 0, n_flu = 0;
    std::vector<int> decoded;
    auto add_fluency = [&](const std::vector<int> & ids) {
        flu += ngram_entropy_fluency(char_tokens(ids));
        ++n_flu;
    };
    for (const auto & s : data.samples) {
        succ += answer_score(edited, s.question, s.target, opts, &decoded);
        add_fluency(decoded);
        for (const auto & r : s.rephrases) {
            gen += answer_score(edited, r, s.target, opts, &decoded);
            add_fluency(decoded);
            ++n_gen;
        }
        port += answer_score(edited, s.portability_probe.question, s.portability_probe.expected, opts, &decoded);
        add_fluency(decoded);
        for (const auto & p : s.locality_probes) {
            const auto prompt = encode_prompt(p.question);
            const auto ref = base.greedy_decode(prompt, opts.max_new);
            const auto out = edited.greedy_decode(prompt, opts.max_new);
            add_fluency(out);
            // an empty reference continuation is matched only by another empty one
            loc += ref.empty() ? (out.empty() ? 1.0 : 0.0) : token_match_score(out, ref);
            ++n_loc;
        }
    }
    const double n = static_cast<double>(data.size());
    MetricsReport r;
    r.edit_success = 100.0 * succ / n;
    r.generalization = n_gen ? 100.0 * gen / static_cast<double>(n_gen) : 0.0;
    r.portability = 100.0 * port / n;
    r.locality = n_loc ? 100.0 * loc / static_cast<double>(n_loc) : 100.0;
    r.fluency = n_flu ? flu / static_cast<double>(n_flu) : 0.0;
    r.fingerprint = edited.config().fingerprint() + "/" + state_digest(edited.weights()).substr(0, 16);
    return r;
}

GeneralScores evaluate_general(const TinyLm & m, const std::vector<std::vector<int>> & heldout,
                               const std::vector<Probe> & qa, const EvalOptions & opts) {
    if (heldout.empty() || qa.empty()) {
        throw ParamError("evaluate_general needs a non-empty held-out corpus and QA set");
    }
    GeneralScores g;
    g.ppl = m.perplexity(heldout);
    double em = 0, f1 = 0;
    for (const auto & p : qa) {
        const std::string pred = decode_tokens(m.greedy_decode(encode_prompt(p.question), opts.max_new));
        em += exact_match(pred, p.expected);
        f1 += f1_score(pred, p.expected);
    }
    g.em = 100.0 * em / static_cast<double>(qa.size());
    g.f1 = 100.0 * f1 / static_cast<double>(qa.size());
    return g;
}

}  // namespace kedit
