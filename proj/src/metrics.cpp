#include "gpas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"

#include "gpas/errors.hpp"

namespace gpas {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> s, std::size_t n) {
    NgramCounts out;
    if (s.size() < n) return out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
    return out;
}

void require_references(const EvalPair &p) {
    if (p.references.empty()) throw ConfigError("evaluation pair without references");
}

} // namespace

BleuStats bleu_stats(std::span<const EvalPair> pairs, std::size_t max_n) {
    if (pairs.empty()) throw ConfigError("bleu: empty corpus");
    BleuStats st;
    st.matches.assign(max_n, 0);
    st.totals.assign(max_n, 0);
    for (const auto &p : pairs) {
        require_references(p);
        const std::size_t c = p.candidate.size();
        st.candidate_length += c;
        // closest reference length, shorter wins ties
        std::size_t best = p.references.front().size();
        for (const auto &r : p.references) {
            const auto d = [c](std::size_t len) { return len > c ? len - c : c - len; };
            if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
        }
        st.reference_length += best;
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto cand = ngrams(p.candidate, n);
            NgramCounts max_ref;
            for (const auto &r : p.references)
                for (const auto &[g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
            for (const auto &[g, k] : cand) {
                st.totals[n - 1] += k;
                auto it = max_ref.find(g);
                if (it != max_ref.end()) st.matches[n - 1] += std::min(k, it->second);
            }
        }
    }
    return st;
}

std::vector<double> bleu(std::span<const EvalPair> pairs, std::size_t max_n) {
    const BleuStats st = bleu_stats(pairs, max_n);
    std::vector<double> out(max_n, 0.0);
    if (st.candidate_length == 0) return out;
    const double c = static_cast<double>(st.candidate_length), r = static_cast<double>(st.reference_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < max_n; ++n) {
        if (st.matches[n] == 0) break;
        log_sum += std::log(static_cast<double>(st.matches[n]) / static_cast<double>(st.totals[n]));
        out[n] = bp * std::exp(log_sum / static_cast<double>(n + 1));
    }
    return out;
}

double sentence_bleu_smoothed(const EvalPair &pair, std::size_t max_n) {
    const BleuStats st = bleu_stats(std::span<const EvalPair>(&pair, 1), max_n);
    if (st.candidate_length == 0) return 0.0;
    const double c = static_cast<double>(st.candidate_length), r = static_cast<double>(st.reference_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < max_n; ++n) {
        const double add = n == 0 ? 0.0 : 1.0;
        const double num = static_cast<double>(st.matches[n]) + add, den = static_cast<double>(st.totals[n]) + add;
        if (num == 0.0) return 0.0;
        log_sum += std::log(num / den);
    }
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_sentence(const EvalPair &pair, double beta) {
    require_references(pair);
    if (pair.candidate.empty()) return 0.0;
    double p_max = 0.0, r_max = 0.0;
    for (const auto &ref : pair.references) {
        const auto l = static_cast<double>(lcs_length(pair.candidate, ref));
        p_max = std::max(p_max, l / static_cast<double>(pair.candidate.size()));
        if (!ref.empty()) r_max = std::max(r_max, l / static_cast<double>(ref.size()));
    }
    if (p_max == 0.0 || r_max == 0.0) return 0.0;
    const double b2 = beta * beta;
    return (1.0 + b2) * p_max * r_max / (r_max + b2 * p_max);
}

double rouge_l(std::span<const EvalPair> pairs, double beta) {
    if (pairs.empty()) throw ConfigError("rouge_l: empty corpus");
    double total = 0.0;
    for (const auto &p : pairs) total += rouge_l_sentence(p, beta);
    return total / static_cast<double>(pairs.size());
}

namespace {

constexpr std::size_t kCiderOrder = 4;

struct TfIdf {
    std::array<std::map<std::vector<std::string>, double>, kCiderOrder> vec;
    std::array<double, kCiderOrder> norm{};
    double length = 0.0;
};

TfIdf tfidf(std::span<const std::string> s, const std::map<std::vector<std::string>, double> &df, double log_docs) {
    TfIdf out;
    out.length = static_cast<double>(s.size());
    for (std::size_t n = 1; n <= kCiderOrder; ++n) {
        for (const auto &[g, k] : ngrams(s, n)) {
            auto it = df.find(g);
            const double d = it == df.end() ? 0.0 : it->second;
            const double w = static_cast<double>(k) * (log_docs - std::log(std::max(1.0, d)));
            out.vec[n - 1][g] = w;
            out.norm[n - 1] += w * w;
        }
        out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
    }
    return out;
}

double cider_sim(const TfIdf &c, const TfIdf &r, double sigma) {
    const double delta = c.length - r.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
    double total = 0.0;
    for (std::size_t n = 0; n < kCiderOrder; ++n) {
        double dot = 0.0;
        for (const auto &[g, vc] : c.vec[n]) {
            auto it = r.vec[n].find(g);
            if (it != r.vec[n].end()) dot += std::min(vc, it->second) * it->second;
        }
        if (c.norm[n] != 0.0 && r.norm[n] != 0.0) dot /= c.norm[n] * r.norm[n];
        total += dot * penalty;
    }
    return total;
}

} // namespace

std::vector<double> cider_d_scores(std::span<const EvalPair> pairs, double sigma) {
    if (pairs.empty()) throw ConfigError("cider_d: empty corpus");
    std::map<std::vector<std::string>, double> df;
    for (const auto &p : pairs) {
        require_references(p);
        std::set<std::vector<std::string>> seen;
        for (const auto &r : p.references)
            for (std::size_t n = 1; n <= kCiderOrder; ++n)
                for (const auto &[g, k] : ngrams(r, n)) seen.insert(g);
        for (const auto &g : seen) df[g] += 1.0;
    }
    const double log_docs = std::log(static_cast<double>(pairs.size()));
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto &p : pairs) {
        const TfIdf c = tfidf(p.candidate, df, log_docs);
        double total = 0.0;
        for (const auto &r : p.references) total += cider_sim(c, tfidf(r, df, log_docs), sigma);
        total /= static_cast<double>(p.references.size());
        scores.push_back(total / static_cast<double>(kCiderOrder) * 10.0);
    }
    return scores;
}

double cider_d(std::span<const EvalPair> pairs, double sigma) {
    const auto scores = cider_d_scores(pairs, sigma);
    double total = 0.0;
    for (double s : scores) total += s;
    return total / static_cast<double>(scores.size());
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["B1"] = 100.0 * bleu[0];
    j["B2"] = 100.0 * bleu[1];
    j["B3"] = 100.0 * bleu[2];
    j["B4"] = 100.0 * bleu[3];
    j["RL"] = 100.0 * rouge_l;
    j["CIDErD"] = 100.0 * cider_d;
    if (token_acc) j["token_acc"] = 100.0 * *token_acc;
    else j["token_acc"] = nullptr;
    return j.dump();
}

EvalReport evaluate_captions(std::span<const EvalPair> pairs) {
    if (pairs.empty()) throw ConfigError("evaluate_captions: empty corpus");
    EvalReport rep;
    const auto b = bleu(pairs, 4);
    std::copy(b.begin(), b.end(), rep.bleu.begin());
    rep.rouge_l = gpas::rouge_l(pairs);
    rep.cider_d = gpas::cider_d(pairs);
    return rep;
}

// ---------------------------------------------------------------- baselines

double consensus_confidence(std::span<const Tokens> segments, std::size_t j) {
    if (j >= segments.size()) throw LookupError("consensus_confidence: segment index out of range");
    const double m = static_cast<double>(segments.size());
    double total = 0.0;
    for (const auto &tok : segments[j]) {
        std::size_t hits = 0;
        for (const auto &s : segments)
            if (std::find(s.begin(), s.end(), tok) != s.end()) ++hits;
        total += std::log(static_cast<double>(hits) / m);
    }
    // the stop token is shared by every sentence: log 1 = 0
    return total / static_cast<double>(segments[j].size() + 1);
}

std::size_t pm_best_index(std::span<const double> confidences) {
    if (confidences.empty()) throw ConfigError("pm_best_index: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < confidences.size(); ++i)
        if (confidences[i] > confidences[best]) best = i;
    return best;
}

PmBaselines pm_baselines(std::span<const PmInput> records) {
    if (records.empty()) throw ConfigError("pm_baselines: empty corpus");
    const std::size_t m = records.front().segments.size();
    for (const auto &r : records) {
        if (r.segments.size() != m || r.segments.empty())
            throw SchemaError("pm_baselines: every record needs the same positive number of segments");
        if (r.confidences.size() != m) throw SchemaError("pm_baselines: one confidence per segment required");
    }
    PmBaselines out;
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<EvalPair> pairs;
        for (const auto &r : records) pairs.push_back({r.segments[j], {r.reference}});
        const EvalReport rep = evaluate_captions(pairs);
        for (std::size_t n = 0; n < 4; ++n) out.ave.bleu[n] += rep.bleu[n] / static_cast<double>(m);
        out.ave.rouge_l += rep.rouge_l / static_cast<double>(m);
        out.ave.cider_d += rep.cider_d / static_cast<double>(m);
    }
    std::vector<EvalPair> pairs;
    for (const auto &r : records) {
        const std::size_t k = pm_best_index(r.confidences);
        out.best_index.push_back(k);
        pairs.push_back({r.segments[k], {r.reference}});
    }
    out.best = evaluate_captions(pairs);
    return out;
}

} // namespace gpas
