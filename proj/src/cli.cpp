#include "gpas/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "gpas/checkpoint.hpp"
#include "gpas/errors.hpp"
#include "gpas/metrics.hpp"
#include "gpas/synth.hpp"

namespace gpas {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

Preset preset(std::string_view name) {
    Preset p;
    if (name == "micro") {
        p.model.hidden = 8;
        p.model.embed = 6;
        p.model.visual_dim = 5;
        p.model.segments = 2;
        p.model.words = 3;
        p.model.vocab_size = 12;
        p.model.keep_prob = 0.8;
        p.train.batch_size = 2;
        p.train.epochs = 3;
    } else if (name == "desk") {
        p.model.hidden = 64;
        p.model.embed = 32;
        p.model.visual_dim = 16;
        p.model.segments = 5;
        p.model.words = 8;
        p.model.vocab_size = 60;
        p.model.keep_prob = 0.8;
        p.train.batch_size = 8;
        p.train.epochs = 30;
    } else if (name == "paper") {
        p.model.hidden = 512;
        p.model.embed = 512;
        p.model.visual_dim = 500;
        p.model.segments = 20;
        p.model.words = 25;
        p.model.vocab_size = 6994 + token::reserved_count;
        p.model.keep_prob = 0.2;
        p.train.batch_size = 32;
    } else {
        throw UsageError("unknown preset '" + std::string(name) + "' (micro, desk, paper)");
    }
    p.train.lr0 = 3e-4;
    p.train.lambda_d = 0.1;
    return p;
}

// ---------------------------------------------------------------- hashing

std::string git_blob_sha1(std::string_view content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw Error("cannot allocate a digest context");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error("SHA-1 computation failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

namespace {

std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string git_blob_sha1_file(const fs::path &path) { return git_blob_sha1(read_file(path)); }

// ---------------------------------------------------------------- gradient check

ProposalRecord random_record(const ModelConfig &config, RngStream &rng) {
    const auto content = [&] {
        return static_cast<TokenId>(token::reserved_count + rng.below(config.vocab_size - token::reserved_count));
    };
    const auto sentence = [&] {
        std::vector<TokenId> ids(config.words, token::blank);
        const std::size_t len = config.words == 1 ? 0 : 1 + rng.below(config.words - 1);
        for (std::size_t k = 0; k < len; ++k) ids[k] = content();
        ids[len] = token::eos;
        return ids;
    };
    ProposalRecord rec;
    rec.id = "random";
    for (std::size_t i = 0; i < config.segments; ++i) {
        Segment s;
        s.sentence = sentence();
        for (std::size_t d = 0; d < config.visual_dim; ++d) s.visual.push_back(rng.normal());
        rec.segments.push_back(std::move(s));
    }
    rec.reference = sentence();
    return rec;
}

ad::GradCheckReport model_grad_check(const ModelConfig &config, const TrainConfig &train, std::uint64_t seed) {
    RngStream root(seed);
    RngStream init = root.split(1);
    ModelParams params = ModelParams::init(config, init);
    // push weights off the tiny init range so saturating paths are exercised too
    RngStream jitter = root.split(2);
    for (auto &np : params.named())
        for (double &v : np.param->value) v += jitter.uniform(-0.4, 0.4);
    RngStream data = root.split(3);
    const ProposalRecord rec = random_record(config, data);
    const auto named = params.named();
    auto f = [&](ad::Tape &tape) {
        RngStream mask = root.split(4);
        return total_loss(tape, rec, params, config, train, RunMode{true, &mask}).total;
    };
    return ad::grad_check(f, named);
}

// ---------------------------------------------------------------- command plumbing

namespace {

struct Options {
    std::string config, corpus, out, preset_name, variant, graph, checkpoint, vocab, resume, seeds;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> rounds, epochs, n_train, n_val;
    std::optional<double> lambda_d;
};

struct Settings {
    Preset p;
    std::string preset_name;
    std::uint64_t seed = 0;
};

Settings resolve(const Options &o, std::string_view default_preset) {
    Settings s;
    s.preset_name = o.preset_name.empty() ? std::string(default_preset) : o.preset_name;
    s.p = preset(s.preset_name);
    if (!o.config.empty()) {
        const kv::Pairs pairs = kv::parse_file(o.config);
        kv::Pairs rest;
        for (const auto &kvp : pairs) {
            ModelConfig probe = s.p.model;
            if (probe.apply({kvp}).empty()) s.p.model = probe;
            else rest.push_back(kvp);
        }
        const auto unknown = s.p.train.apply(rest);
        if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "' in " + o.config);
    }
    if (!o.variant.empty()) s.p.model.variant = parse_variant(o.variant);
    if (!o.graph.empty()) s.p.model.graph = parse_graph(o.graph);
    if (o.rounds) s.p.model.rounds = *o.rounds;
    if (o.lambda_d) s.p.train.lambda_d = *o.lambda_d;
    if (o.epochs) s.p.train.epochs = *o.epochs;
    if (o.seed) s.p.train.seed = *o.seed;
    s.seed = s.p.train.seed;
    return s;
}

void require(const std::string &value, const char *flag) {
    if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
}

ojson pairs_json(const kv::Pairs &pairs) {
    ojson j = ojson::object();
    for (const auto &[k, v] : pairs) j[k] = v;
    return j;
}

void write_manifest(const fs::path &dir, std::string_view command, std::span<const std::string> args,
                    const Settings &s, const std::vector<fs::path> &inputs, const std::vector<fs::path> &outputs) {
    ojson j;
    j["command"] = command;
    j["argv"] = std::vector<std::string>(args.begin(), args.end());
    j["seed"] = s.seed;
    j["preset"] = s.preset_name;
    ojson cfg = pairs_json(s.p.model.to_pairs());
    for (const auto &[k, v] : s.p.train.to_pairs()) cfg[k] = v;
    j["config"] = cfg;
    ojson in = ojson::array();
    for (const auto &p : inputs) in.push_back({{"path", p.string()}, {"git_sha1", git_blob_sha1_file(p)}});
    j["inputs"] = in;
    ojson out = ojson::array();
    for (const auto &p : outputs)
        out.push_back({{"path", p.string()}, {"git_sha1", fs::exists(p) ? git_blob_sha1_file(p) : ""}});
    j["outputs"] = out;
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw Error("cannot write manifest in " + dir.string());
    f << j.dump(2) << '\n';
}

std::string join(const Tokens &t) {
    std::string s;
    for (const auto &w : t) s += (s.empty() ? "" : " ") + w;
    return s;
}

Vocabulary vocab_for_corpus_dir(const Options &o, const fs::path &dir, std::vector<fs::path> &inputs) {
    fs::path path = !o.vocab.empty() ? fs::path(o.vocab) : dir / "vocab.tsv";
    if (fs::exists(path)) {
        inputs.push_back(path);
        return Vocabulary::load(path);
    }
    return build_vocab(read_raw_corpus(dir / "train.jsonl"));
}

CorpusLayout layout_of(const ModelConfig &m) { return {m.segments, m.words, m.visual_dim}; }

// ---------------------------------------------------------------- commands

int cmd_prep_vocab(const Options &o, std::span<const std::string> args, std::ostream &out) {
    require(o.corpus, "--corpus");
    require(o.out, "--out");
    const Settings s = resolve(o, "desk");
    const fs::path dir(o.out);
    fs::create_directories(dir);
    const auto raw = read_raw_corpus(o.corpus);
    const Vocabulary vocab = build_vocab(raw);
    vocab.save(dir / "vocab.tsv");
    write_manifest(dir, "prep-vocab", args, s, {o.corpus}, {dir / "vocab.tsv"});
    out << "vocabulary of " << vocab.size() << " tokens written to " << (dir / "vocab.tsv").string() << '\n';
    return kExitOk;
}

int cmd_gen_synth(const Options &o, std::span<const std::string> args, std::ostream &out) {
    require(o.out, "--out");
    const Settings s = resolve(o, "desk");
    SynthSpec spec;
    spec.segments = s.p.model.segments;
    spec.words = s.p.model.words;
    spec.visual_dim = s.p.model.visual_dim;
    spec.seed = s.seed;
    const fs::path dir(o.out);
    fs::create_directories(dir);
    const auto corpus = gen_corpus(spec, o.n_train.value_or(2000), o.n_val.value_or(200));
    write_synth_corpus(dir, corpus);
    write_manifest(dir, "gen-synth", args, s, {}, {dir / "train.jsonl", dir / "val.jsonl"});
    out << "wrote " << corpus.train.size() << " train and " << corpus.validation.size() << " validation records to "
        << dir.string() << '\n';
    return kExitOk;
}

int cmd_train(const Options &o, std::span<const std::string> args, std::ostream &out) {
    require(o.corpus, "--corpus");
    require(o.out, "--out");
    Settings s = resolve(o, "desk");
    const fs::path cdir(o.corpus), dir(o.out);
    std::vector<fs::path> inputs{cdir / "train.jsonl", cdir / "val.jsonl"};
    const Vocabulary vocab = vocab_for_corpus_dir(o, cdir, inputs);
    s.p.model.vocab_size = vocab.size();
    const auto train_set = load_corpus(cdir / "train.jsonl", vocab, layout_of(s.p.model), SplitRole::train);
    const auto val_set = load_corpus(cdir / "val.jsonl", vocab, layout_of(s.p.model), SplitRole::validation);

    fs::create_directories(dir);
    vocab.save(dir / "vocab.tsv");
    {
        kv::Pairs all = s.p.model.to_pairs();
        for (auto &kvp : s.p.train.to_pairs()) all.push_back(kvp);
        std::ofstream cfg(dir / "run.cfg", std::ios::binary);
        cfg << kv::format(all);
    }
    TrainRun run{s.p.model, s.p.train, dir, std::nullopt, std::nullopt};
    if (!o.resume.empty()) {
        run.resume = o.resume;
        inputs.push_back(o.resume);
    }
    write_manifest(dir, "train", args, s, inputs, {});
    const TrainResult res = train(run, train_set.records, val_set.records);
    write_manifest(dir, "train", args, s, inputs,
                   {dir / "vocab.tsv", dir / "run.cfg", dir / "metrics.jsonl", dir / "best.ckpt", dir / "last.ckpt"});
    const auto &last = res.log.empty() ? EpochMetrics{} : res.log.back();
    out << "trained " << res.log.size() << " epochs; best val_token_acc " << res.best_val_acc << " at epoch "
        << res.best_epoch << "; last " << last.to_json() << '\n';
    return kExitOk;
}

int cmd_decode(const Options &o, std::span<const std::string> args, std::ostream &out) {
    require(o.corpus, "--corpus");
    require(o.checkpoint, "--checkpoint");
    require(o.out, "--out");
    Checkpoint ck = load_checkpoint(o.checkpoint);
    const fs::path vocab_path = !o.vocab.empty() ? fs::path(o.vocab) : fs::path(o.checkpoint).parent_path() / "vocab.tsv";
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    if (vocab.size() != ck.config.vocab_size) throw SchemaError("vocabulary size does not match the checkpoint");
    Settings s;
    s.p.model = ck.config;
    s.p.train.apply(ck.extra);
    s.preset_name = "checkpoint";
    s.seed = s.p.train.seed;

    const auto raw = read_raw_corpus(o.corpus);
    const auto split = encode_corpus(raw, vocab, layout_of(ck.config), SplitRole::validation);
    const fs::path dir(o.out);
    fs::create_directories(dir);
    std::ofstream f(dir / "decoded.jsonl", std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / "decoded.jsonl").string());
    for (std::size_t i = 0; i < split.records.size(); ++i) {
        const auto &rec = split.records[i];
        const Decoded d = greedy_decode(rec, ck.params, ck.config);
        const Evaluation ev = evaluate(std::span(&rec, 1), ck.params, ck.config, s.p.train);
        ojson j;
        j["id"] = rec.id;
        j["candidate"] = join(decode_tokens(d.ids, vocab));
        j["reference"] = join(normalize_text(raw[i].reference));
        j["confidence"] = confidence_score(d.probs);
        j["correct"] = static_cast<std::size_t>(std::llround(ev.token_acc * static_cast<double>(ev.positions)));
        j["positions"] = ev.positions;
        f << j.dump() << '\n';
    }
    f.close();
    write_manifest(dir, "decode", args, s, {o.corpus, o.checkpoint, vocab_path}, {dir / "decoded.jsonl"});
    out << "decoded " << split.records.size() << " records to " << (dir / "decoded.jsonl").string() << '\n';
    return kExitOk;
}

int cmd_eval(const Options &o, std::span<const std::string> args, std::ostream &out) {
    require(o.corpus, "--corpus");
    require(o.out, "--out");
    const Settings s = resolve(o, "desk");
    std::ifstream in(o.corpus);
    if (!in) throw ParseError("cannot open " + o.corpus);
    std::vector<EvalPair> pairs;
    std::size_t correct = 0, positions = 0, lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            pairs.push_back({normalize_text(j.at("candidate").get<std::string>()),
                             {normalize_text(j.at("reference").get<std::string>())}});
            if (j.contains("positions")) {
                correct += j.at("correct").get<std::size_t>();
                positions += j.at("positions").get<std::size_t>();
            }
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(std::string("bad decoded line: ") + e.what(), lineno);
        }
    }
    EvalReport rep = evaluate_captions(pairs);
    if (positions > 0) rep.token_acc = static_cast<double>(correct) / static_cast<double>(positions);
    const fs::path dir(o.out);
    fs::create_directories(dir);
    std::ofstream(dir / "report.json", std::ios::binary) << rep.to_json() << '\n';
    write_manifest(dir, "eval", args, s, {o.corpus}, {dir / "report.json"});
    out << rep.to_json() << '\n';
    return kExitOk;
}

struct ArchConfig {
    Variant variant;
    GraphKind graph;
};

constexpr ArchConfig kAllArchitectures[] = {
    {Variant::none, GraphKind::basic},        {Variant::agcn_out, GraphKind::basic},
    {Variant::agcn_out, GraphKind::expanded}, {Variant::agcn_in, GraphKind::basic},
    {Variant::agcn_in, GraphKind::expanded},
};

int cmd_gradcheck(const Options &o, std::span<const std::string> args, std::ostream &out) {
    const Settings s = resolve(o, "micro");
    std::vector<ModelConfig> configs;
    if (o.variant.empty() && o.graph.empty()) {
        for (const auto &a : kAllArchitectures) {
            ModelConfig m = s.p.model;
            m.variant = a.variant;
            m.graph = a.graph;
            configs.push_back(m);
        }
    } else {
        configs.push_back(s.p.model);
    }
    bool all = true;
    double worst = 0.0;
    ojson report = ojson::array();
    for (const auto &m : configs) {
        const auto r = model_grad_check(m, s.p.train, s.seed);
        all = all && r.passed;
        worst = std::max(worst, r.max_rel_error);
        out << "gradcheck " << to_string(m.variant) << '/' << to_string(m.graph) << ": " << r.checked
            << " scalars, max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
            << std::defaultfloat << (r.passed ? " PASS" : " FAIL") << '\n';
        for (const auto &[group, err] : r.per_group)
            out << "  " << std::left << std::setw(34) << group << std::scientific << std::setprecision(3) << err
                << std::defaultfloat << std::right << '\n';
        ojson groups = ojson::object();
        for (const auto &[group, err] : r.per_group) groups[group] = err;
        report.push_back({{"variant", to_string(m.variant)},
                          {"graph", to_string(m.graph)},
                          {"checked", r.checked},
                          {"max_rel_error", r.max_rel_error},
                          {"passed", r.passed},
                          {"groups", groups}});
    }
    out << "max relative error over all configs " << std::scientific << std::setprecision(3) << worst
        << std::defaultfloat << '\n';
    if (!o.out.empty()) {
        const fs::path dir(o.out);
        fs::create_directories(dir);
        std::ofstream(dir / "gradcheck.json", std::ios::binary) << report.dump(2) << '\n';
        write_manifest(dir, "gradcheck", args, s, {}, {dir / "gradcheck.json"});
    }
    return all ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- ablation

struct AblationRow {
    std::string name;
    std::optional<ModelConfig> model; // absent for the training-free rows
    double published_b4;
    double published_meteor;
};

struct Scores {
    std::vector<double> values; // B1 B2 B3 B4 RL CIDErD token_acc, times 100
};

Scores to_scores(const EvalReport &r) {
    Scores s;
    for (double b : r.bleu) s.values.push_back(100.0 * b);
    s.values.push_back(100.0 * r.rouge_l);
    s.values.push_back(100.0 * r.cider_d);
    s.values.push_back(r.token_acc ? 100.0 * *r.token_acc : std::nan(""));
    return s;
}

std::vector<double> parse_seeds(const std::string &text) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(static_cast<double>(kv::to_u64("--seeds", item)));
    if (out.empty()) throw UsageError("--seeds needs at least one seed");
    return out;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "-";
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << v;
    return ss.str();
}

int cmd_ablate(const Options &o, std::span<const std::string> args, std::ostream &out) {
    require(o.corpus, "--corpus");
    require(o.out, "--out");
    Settings s = resolve(o, "desk");
    const fs::path cdir(o.corpus), dir(o.out);
    std::vector<fs::path> inputs{cdir / "train.jsonl", cdir / "val.jsonl"};
    const Vocabulary vocab = vocab_for_corpus_dir(o, cdir, inputs);
    s.p.model.vocab_size = vocab.size();
    const auto train_set = load_corpus(cdir / "train.jsonl", vocab, layout_of(s.p.model), SplitRole::train);
    const auto val_raw = read_raw_corpus(cdir / "val.jsonl");
    const auto val_set = encode_corpus(val_raw, vocab, layout_of(s.p.model), SplitRole::validation);
    const auto seeds = parse_seeds(o.seeds.empty() ? "0,1,2,3,4" : o.seeds);

    auto arch = [&](Variant v, GraphKind g, bool tvj) {
        ModelConfig m = s.p.model;
        m.variant = v;
        m.graph = g;
        m.use_tvj = tvj;
        return m;
    };
    const std::vector<AblationRow> rows = {
        {"PaS-basic-w/o-TVJ", arch(Variant::none, GraphKind::basic, false), 1.43, 9.00},
        {"PaS-basic", arch(Variant::none, GraphKind::basic, true), 1.53, 9.30},
        {"aGCN-out-LSTM-basic", arch(Variant::agcn_out, GraphKind::basic, true), 1.64, 9.46},
        {"aGCN-out-LSTM-expanded", arch(Variant::agcn_out, GraphKind::expanded, true), 1.52, 9.62},
        {"aGCN-in-LSTM-basic", arch(Variant::agcn_in, GraphKind::basic, true), 1.62, 9.48},
        {"aGCN-in-LSTM-expanded", arch(Variant::agcn_in, GraphKind::expanded, true), 1.60, 9.72},
        {"PM-ave", std::nullopt, 1.22, 8.46},
        {"PM-best", std::nullopt, 1.34, 9.07},
    };

    // training-free baselines
    std::vector<PmInput> pm;
    for (const auto &r : val_raw) {
        PmInput in;
        bool have_conf = true;
        for (const auto &seg : r.segments) {
            in.segments.push_back(normalize_text(seg.sentence));
            have_conf = have_conf && seg.confidence.has_value();
        }
        for (std::size_t j = 0; j < r.segments.size(); ++j)
            in.confidences.push_back(have_conf ? *r.segments[j].confidence : consensus_confidence(in.segments, j));
        in.reference = normalize_text(r.reference);
        pm.push_back(std::move(in));
    }
    const PmBaselines base = pm_baselines(pm);

    std::vector<std::vector<Scores>> results(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto &row = rows[k];
        if (!row.model) {
            results[k].push_back(to_scores(row.name == "PM-ave" ? base.ave : base.best));
            continue;
        }
        for (double seed : seeds) {
            TrainConfig tc = s.p.train;
            tc.seed = static_cast<std::uint64_t>(seed);
            TrainRun run{*row.model, tc, std::nullopt, std::nullopt, std::nullopt};
            TrainResult res = train(run, train_set.records, val_set.records);
            std::vector<EvalPair> pairs;
            for (std::size_t i = 0; i < val_set.records.size(); ++i) {
                const Decoded d = greedy_decode(val_set.records[i], res.best, *row.model);
                pairs.push_back({decode_tokens(d.ids, vocab), {normalize_text(val_raw[i].reference)}});
            }
            EvalReport rep = evaluate_captions(pairs);
            rep.token_acc = evaluate(val_set.records, res.best, *row.model, tc).token_acc;
            results[k].push_back(to_scores(rep));
            out << "ablate " << row.name << " seed " << seed << ": B4 " << fmt(results[k].back().values[3])
                << " token_acc " << fmt(results[k].back().values[6]) << '\n';
        }
    }

    static const char *metric_names[] = {"B1", "B2", "B3", "B4", "RL", "CIDErD", "token_acc"};
    std::ostringstream tsv;
    tsv << "row\tseeds";
    for (const char *m : metric_names) tsv << '\t' << m << "_mean\t" << m << "_sd";
    tsv << "\tpublished_activitynet_B4 (not comparable)\tpublished_activitynet_Meteor (not comparable)\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto &runs = results[k];
        tsv << rows[k].name << '\t' << runs.size();
        for (std::size_t m = 0; m < std::size(metric_names); ++m) {
            double mean = 0.0;
            for (const auto &r : runs) mean += r.values[m];
            mean /= static_cast<double>(runs.size());
            double var = 0.0;
            for (const auto &r : runs) var += (r.values[m] - mean) * (r.values[m] - mean);
            const double sd = runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0;
            tsv << '\t' << fmt(mean) << '\t' << (std::isnan(mean) ? "-" : fmt(sd));
        }
        tsv << '\t' << fmt(rows[k].published_b4) << '\t' << fmt(rows[k].published_meteor) << '\n';
    }
    fs::create_directories(dir);
    std::ofstream(dir / "ablation.tsv", std::ios::binary) << tsv.str();
    write_manifest(dir, "ablate", args, s, inputs, {dir / "ablation.tsv"});
    out << tsv.str();
    return kExitOk;
}

// ---------------------------------------------------------------- dispatch

void add_common(CLI::App *cmd, Options &o) {
    cmd->add_option("--config", o.config, "key = value run config");
    cmd->add_option("--seed", o.seed, "root seed for every random stream");
    cmd->add_option("--corpus", o.corpus, "corpus file or directory");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--preset", o.preset_name, "micro, desk or paper");
    cmd->add_option("--variant", o.variant, "none, agcn_out or agcn_in");
    cmd->add_option("--graph", o.graph, "basic or expanded");
    cmd->add_option("--rounds", o.rounds, "graph refinement rounds");
    cmd->add_option("--lambda-d", o.lambda_d, "weight of the discriminative loss");
}

} // namespace

int run_cli(std::span<const std::string> args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Graph-based summarization of segment captions", "gpas"};
    app.require_subcommand(1, 1);
    Options o;

    auto *prep = app.add_subcommand("prep-vocab", "build a vocabulary from a training corpus file");
    auto *synth = app.add_subcommand("gen-synth", "write a synthetic train/val corpus");
    auto *trn = app.add_subcommand("train", "train a model on a corpus directory");
    auto *dec = app.add_subcommand("decode", "greedy-decode a corpus file with a checkpoint");
    auto *ev = app.add_subcommand("eval", "score decoded captions");
    auto *gc = app.add_subcommand("gradcheck", "compare gradients against finite differences");
    auto *abl = app.add_subcommand("ablate", "train and score every ablation row over several seeds");
    for (auto *c : {prep, synth, trn, dec, ev, gc, abl}) add_common(c, o);
    synth->add_option("--n-train", o.n_train, "training records (default 2000)");
    synth->add_option("--n-val", o.n_val, "validation records (default 200)");
    for (auto *c : {trn, abl}) {
        c->add_option("--vocab", o.vocab, "vocabulary file (default: built from train.jsonl)");
        c->add_option("--epochs", o.epochs, "override the epoch budget");
    }
    trn->add_option("--resume", o.resume, "last.ckpt of an interrupted run");
    dec->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    dec->add_option("--vocab", o.vocab, "vocabulary file (default: next to the checkpoint)");
    abl->add_option("--seeds", o.seeds, "comma-separated seeds (default 0,1,2,3,4)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << "usage error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    try {
        if (prep->parsed()) return cmd_prep_vocab(o, args, out);
        if (synth->parsed()) return cmd_gen_synth(o, args, out);
        if (trn->parsed()) return cmd_train(o, args, out);
        if (dec->parsed()) return cmd_decode(o, args, out);
        if (ev->parsed()) return cmd_eval(o, args, out);
        if (gc->parsed()) return cmd_gradcheck(o, args, out);
        if (abl->parsed()) return cmd_ablate(o, args, out);
    } catch (const UsageError &e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace gpas
