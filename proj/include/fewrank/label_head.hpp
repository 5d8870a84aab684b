#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "fewrank/error.hpp"
#include "fewrank/prompting.hpp"

namespace fewrank {

// The label-word rows of the language-modeling output matrix.
struct LabelWordHead {
    std::map<std::string, Eigen::VectorXd> vectors;
};

struct ScoreOutput {
    Eigen::VectorXd h_t;                   // decision-token hidden state
    std::map<int, double> probs;           // task label -> probability
    std::map<std::string, double> logits;  // label word -> w . h_t
};

inline std::map<std::string, double> label_logits(const LabelWordHead& head,
                                                  const Eigen::VectorXd& h_t) {
    std::map<std::string, double> out;
    for (const auto& [word, w] : head.vectors) {
        if (w.size() != h_t.size()) throw UsageError("label head dimension mismatch");
        out[word] = w.dot(h_t);
    }
    return out;
}

// Softmax restricted to the verbalizer's label words, never the full
// vocabulary.
inline std::map<int, double> restricted_softmax(const Verbalizer& verbalizer,
                                                const std::map<std::string, double>& logits) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int y : verbalizer.labels()) {
        auto it = logits.find(verbalizer.verbalize(y));
        if (it == logits.end())
            throw UsageError("missing logit for label word \"" + verbalizer.verbalize(y) + "\"");
        max_logit = std::max(max_logit, it->second);
    }
    std::map<int, double> probs;
    double denom = 0.0;
    for (int y : verbalizer.labels()) {
        double e = std::exp(logits.at(verbalizer.verbalize(y)) - max_logit);
        probs[y] = e;
        denom += e;
    }
    for (auto& [y, p] : probs) p /= denom;
    return probs;
}

inline ScoreOutput make_score_output(const Verbalizer& verbalizer, Eigen::VectorXd h_t,
                                     std::map<std::string, double> logits) {
    ScoreOutput out;
    out.h_t = std::move(h_t);
    out.logits = std::move(logits);
    out.probs = restricted_softmax(verbalizer, out.logits);
    return out;
}

// -ln(probs[y]).
inline double ce_loss(const ScoreOutput& output, int y) {
    auto it = output.probs.find(y);
    if (it == output.probs.end()) throw DataError("label " + std::to_string(y) + " not scored");
    return -std::log(it->second);
}

}  // namespace fewrank
