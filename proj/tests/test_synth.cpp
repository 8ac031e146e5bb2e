#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gpas/errors.hpp"
#include "gpas/synth.hpp"

using namespace gpas;
namespace fs = std::filesystem;

namespace {

double binom_pmf(std::size_t n, std::size_t k, double p) {
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                    static_cast<double>(k) * std::log(p) + static_cast<double>(n - k) * std::log1p(-p));
}

// Pr(Bin(n, p) > n / 2)
double strict_majority(std::size_t n, double p) {
    double total = 0;
    for (std::size_t k = n / 2 + 1; k <= n; ++k) total += binom_pmf(n, k, p);
    return total;
}

// Probability that the true token strictly outnumbers every one of d
// distractors when each of n slots keeps it with probability p and otherwise
// holds a uniform distractor. For k true slots, the m = n - k corrupted slots
// form a multinomial; count the assignments with every distractor below k via
// the exponential generating function (sum_{j<k} x^j / j!)^d.
double strict_plurality(std::size_t n, double p, std::size_t d) {
    double total = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        const std::size_t m = n - k;
        std::vector<double> poly(m + 1, 0.0);
        poly[0] = 1;
        for (std::size_t r = 0; r < d; ++r) {
            std::vector<double> next(m + 1, 0.0);
            for (std::size_t a = 0; a <= m; ++a) {
                if (poly[a] == 0) continue;
                for (std::size_t j = 0; j < k && a + j <= m; ++j) next[a + j] += poly[a] / std::tgamma(j + 1.0);
            }
            poly = std::move(next);
        }
        const double ways = poly[m] * std::tgamma(m + 1.0) / std::pow(static_cast<double>(d), static_cast<double>(m));
        total += binom_pmf(n, k, p) * ways;
    }
    return total;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> words(const std::string &s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

} // namespace

TEST(Synth, NoiselessSegmentsEqualReference) {
    SynthSpec spec;
    spec.noise_rate = 0;
    RngStream rng(1);
    for (int i = 0; i < 20; ++i) {
        const auto r = gen_record(spec, rng, "r");
        ASSERT_EQ(r.record.segments.size(), spec.segments);
        for (const auto &s : r.record.segments) EXPECT_EQ(s.sentence, r.record.reference);
        EXPECT_EQ(words(r.record.reference).size(), 3u);
    }
}

TEST(Synth, FixedSeedIdenticalRecord) {
    SynthSpec spec;
    RngStream a(123), b(123);
    const auto x = gen_record(spec, a, "id");
    const auto y = gen_record(spec, b, "id");
    EXPECT_EQ(to_json_line(x.record), to_json_line(y.record));
}

TEST(Synth, PluralityRecoversReferenceAtHighProbability) {
    // closed-form oracles
    const double majority = strict_majority(20, 0.7);
    EXPECT_NEAR(majority, 0.952038, 1e-6);
    SynthSpec spec;
    spec.noise_rate = 0.3;
    spec.segments = 20;
    const std::size_t distractors = synth_lexicon(spec).distractors.size();
    EXPECT_EQ(distractors, 25u);
    const double plurality = strict_plurality(20, 0.7, distractors);
    EXPECT_GE(plurality, 0.99);
    EXPECT_GE(plurality, majority);

    // the generator agrees with the oracle
    RngStream rng(2024);
    std::size_t hits = 0, positions = 0;
    for (int i = 0; i < 3000; ++i) {
        const auto r = gen_record(spec, rng, "r");
        const auto ref = words(r.record.reference);
        for (std::size_t pos = 0; pos < 3; ++pos) {
            std::map<std::string, int> votes;
            for (const auto &s : r.record.segments) ++votes[words(s.sentence)[pos]];
            int best_other = 0;
            for (const auto &[w, c] : votes)
                if (w != ref[pos]) best_other = std::max(best_other, c);
            hits += votes[ref[pos]] > best_other ? 1 : 0;
            ++positions;
        }
    }
    EXPECT_GE(static_cast<double>(hits) / static_cast<double>(positions), 0.99);
}

TEST(Synth, CorpusCountsDeterminismAndClosedVocabulary) {
    SynthSpec spec;
    const auto c = gen_corpus(spec, 100, 20);
    ASSERT_EQ(c.train.size(), 100u);
    std::set<std::string> ids;
    for (const auto &r : c.train) ids.insert(r.id);
    EXPECT_EQ(ids.size(), 100u);

    const auto lex = synth_lexicon(spec);
    std::set<std::string> concepts;
    for (const auto &role : lex.roles) concepts.insert(role.begin(), role.end());
    for (const auto &r : c.validation)
        for (const auto &w : words(r.reference)) EXPECT_TRUE(concepts.count(w)) << w;

    const fs::path a = fs::temp_directory_path() / "gpas_synth_a", b = fs::temp_directory_path() / "gpas_synth_b";
    fs::remove_all(a);
    fs::remove_all(b);
    write_synth_corpus(a, c);
    write_synth_corpus(b, gen_corpus(spec, 100, 20));
    EXPECT_EQ(slurp(a / "train.jsonl"), slurp(b / "train.jsonl"));
    EXPECT_EQ(slurp(a / "val.jsonl"), slurp(b / "val.jsonl"));
}

TEST(Synth, RecordDependsOnlyOnSeedSplitAndIndex) {
    SynthSpec spec;
    const auto small = gen_corpus(spec, 5, 5);
    const auto big = gen_corpus(spec, 50, 7);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(to_json_line(small.train[i]), to_json_line(big.train[i]));
        EXPECT_EQ(to_json_line(small.validation[i]), to_json_line(big.validation[i]));
    }
    EXPECT_NE(to_json_line(small.train[0]), to_json_line(small.validation[0]));
}

TEST(Synth, SpecValidation) {
    SynthSpec spec;
    spec.noise_rate = 0.5;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec.noise_rate = 0.2;
    spec.n_concepts = 56;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec.n_concepts = 55;
    EXPECT_NO_THROW(spec.validate());
    EXPECT_THROW(gen_corpus(SynthSpec{}, 0, 1), ConfigError);
}
