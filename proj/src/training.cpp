#include "gpas/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "gpas/checkpoint.hpp"
#include "gpas/errors.hpp"

namespace gpas {

using ad::Tape;
using ad::Var;

namespace {

constexpr std::uint64_t kInitKey = 0x1417;
constexpr std::uint64_t kShuffleKey = 0x5B0F;
constexpr std::uint64_t kDropoutKey = 0xD409;

constexpr std::string_view kMomentPrefix = "optimizer/m/";
constexpr std::string_view kVelocityPrefix = "optimizer/v/";

} // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
    if (decay_every == 0) throw ConfigError("decay_every must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lambda_d >= 0.0)) throw ConfigError("lambda_d must be nonnegative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

kv::Pairs TrainConfig::to_pairs() const {
    using kv::to_text;
    return {
        {"lr0", to_text(lr0)},
        {"decay_factor", to_text(decay_factor)},
        {"decay_every", to_text(decay_every)},
        {"batch_size", to_text(batch_size)},
        {"epochs", to_text(epochs)},
        {"lambda_d", to_text(lambda_d)},
        {"seed", std::to_string(seed)},
        {"mask_padding", to_text(mask_padding)},
        {"clip_norm", to_text(clip_norm)},
        {"beta1", to_text(beta1)},
        {"beta2", to_text(beta2)},
        {"adam_eps", to_text(adam_eps)},
        {"target_val_acc", to_text(target_val_acc)},
    };
}

std::vector<std::string> TrainConfig::apply(const kv::Pairs &pairs) {
    std::vector<std::string> unknown;
    for (const auto &[k, v] : pairs) {
        if (k == "lr0") lr0 = kv::to_double(k, v);
        else if (k == "decay_factor") decay_factor = kv::to_double(k, v);
        else if (k == "decay_every") decay_every = kv::to_size(k, v);
        else if (k == "batch_size") batch_size = kv::to_size(k, v);
        else if (k == "epochs") epochs = kv::to_size(k, v);
        else if (k == "lambda_d") lambda_d = kv::to_double(k, v);
        else if (k == "seed") seed = kv::to_u64(k, v);
        else if (k == "mask_padding") mask_padding = kv::to_bool(k, v);
        else if (k == "clip_norm") clip_norm = kv::to_double(k, v);
        else if (k == "beta1") beta1 = kv::to_double(k, v);
        else if (k == "beta2") beta2 = kv::to_double(k, v);
        else if (k == "adam_eps") adam_eps = kv::to_double(k, v);
        else if (k == "target_val_acc") target_val_acc = kv::to_double(k, v);
        else unknown.push_back(k);
    }
    return unknown;
}

double lr_at(std::size_t epoch, const TrainConfig &config) {
    const auto steps = static_cast<double>(epoch / config.decay_every);
    return config.lr0 / std::pow(config.decay_factor, steps);
}

// ---------------------------------------------------------------- losses

Var cross_entropy(Var logits, std::span<const TokenId> reference, std::span<const double> mask) {
    const auto shape = logits.shape();
    if (reference.size() != shape.rows || mask.size() != shape.rows)
        throw DimensionError("cross_entropy: " + std::to_string(shape.rows) + " logit rows, " +
                             std::to_string(reference.size()) + " reference ids, " + std::to_string(mask.size()) +
                             " mask entries");
    const double total = std::accumulate(mask.begin(), mask.end(), 0.0);
    if (!(total > 0.0)) throw NumericError("cross_entropy: every position is masked");
    std::vector<std::size_t> cols(reference.begin(), reference.end());
    for (std::size_t c : cols)
        if (c >= shape.cols) throw LookupError("cross_entropy: reference id outside vocabulary");
    std::vector<double> w(mask.size());
    for (std::size_t t = 0; t < mask.size(); ++t) w[t] = -mask[t] / total;
    Var picked = ad::pick(ad::log_softmax_rows(logits), cols);
    const std::size_t n = w.size();
    return ad::matmul(logits.tape().constant({1, n}, std::move(w)), picked);
}

std::vector<double> bag_of_words(std::span<const TokenId> reference, std::size_t vocab_size) {
    std::vector<double> y(vocab_size, 0.0);
    for (TokenId id : reference) {
        if (id >= vocab_size) throw LookupError("bag_of_words: token id outside vocabulary");
        if (!Vocabulary::is_reserved(id)) y[id] = 1.0;
    }
    return y;
}

Var discriminative_loss(std::span<const Var> refined_hiddens, ModelParams &params, std::span<const TokenId> reference) {
    if (refined_hiddens.empty()) throw DimensionError("discriminative_loss: no decoder states");
    Tape &tape = refined_hiddens.front().tape();
    const std::size_t V = params.disc_weight.shape.cols;
    Var mean = ad::scale(ad::sum_rows(ad::concat(refined_hiddens, 0)), 1.0 / static_cast<double>(refined_hiddens.size()));
    Var z = ad::add(ad::matmul(mean, tape.param(params.disc_weight)), tape.param(params.disc_bias));
    Var y = tape.constant({1, V}, bag_of_words(reference, V));
    return ad::scale(ad::sum(ad::sub(ad::softplus(z), ad::mul(y, z))), 1.0 / static_cast<double>(V));
}

LossParts total_loss(Tape &tape, const ProposalRecord &record, ModelParams &params, const ModelConfig &model,
                     const TrainConfig &train, const RunMode &mode) {
    LossParts out;
    out.forward = forward_teacher_forced(tape, record, params, model, mode);
    const auto mask = loss_mask(record.reference, train.mask_padding);
    out.cross_entropy = cross_entropy(out.forward.logits, record.reference, mask);
    out.total = out.cross_entropy;
    if (train.lambda_d != 0.0) {
        out.discriminative = discriminative_loss(out.forward.decoder.states.h_refined, params, record.reference);
        out.total = ad::add(out.total, ad::scale(out.discriminative, train.lambda_d));
    }
    return out;
}

// ---------------------------------------------------------------- optimizer

AdamState AdamState::for_params(std::span<const ad::NamedParameter> params) {
    AdamState s;
    for (const auto &np : params) {
        s.m.emplace_back(np.param->value.size(), 0.0);
        s.v.emplace_back(np.param->value.size(), 0.0);
    }
    return s;
}

void adam_step(std::span<const ad::NamedParameter> params, AdamState &state, double lr, double beta1, double beta2,
               double eps) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw DimensionError("adam_step: optimizer state does not match the parameter list");
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ad::Parameter &p = *params[k].param;
        auto &m = state.m[k];
        auto &v = state.v[k];
        if (m.size() != p.value.size() || v.size() != p.value.size() || p.grad.size() != p.value.size())
            throw DimensionError("adam_step: moment shape differs for " + params[k].name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

double clip_gradients(std::span<const ad::NamedParameter> params, double max_norm) {
    double sq = 0.0;
    for (const auto &np : params)
        for (double g : np.param->grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (const auto &np : params)
            for (double &g : np.param->grad) g *= f;
    }
    return norm;
}

// ---------------------------------------------------------------- metrics log

std::string EpochMetrics::to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss;
    j["val_token_acc"] = val_token_acc;
    j["lr"] = lr;
    return j.dump();
}

EpochMetrics EpochMetrics::from_json(const std::string &line) {
    try {
        const auto j = nlohmann::json::parse(line);
        EpochMetrics m;
        m.epoch = j.at("epoch").get<std::size_t>();
        m.train_loss = j.at("train_loss").get<double>();
        m.val_loss = j.at("val_loss").get<double>();
        m.val_token_acc = j.at("val_token_acc").get<double>();
        m.lr = j.at("lr").get<double>();
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("bad metrics line: ") + e.what());
    }
}

// ---------------------------------------------------------------- loop

Evaluation evaluate(std::span<const ProposalRecord> records, ModelParams &params, const ModelConfig &model,
                    const TrainConfig &train) {
    Evaluation ev;
    if (records.empty()) return ev;
    Tape tape;
    std::size_t correct = 0;
    for (const auto &rec : records) {
        tape.reset();
        auto parts = total_loss(tape, rec, params, model, train, RunMode{});
        ev.loss += parts.total.item();
        const auto mask = loss_mask(rec.reference, train.mask_padding);
        const Var logits = parts.forward.logits;
        const std::size_t V = logits.shape().cols;
        auto z = logits.value();
        for (std::size_t t = 0; t < rec.reference.size(); ++t) {
            if (mask[t] == 0.0) continue;
            std::size_t best = 0;
            for (std::size_t k = 1; k < V; ++k)
                if (z[t * V + k] > z[t * V + best]) best = k;
            ++ev.positions;
            if (best == rec.reference[t]) ++correct;
        }
    }
    ev.loss /= static_cast<double>(records.size());
    ev.token_acc = ev.positions == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(ev.positions);
    return ev;
}

namespace {

BlockList optimizer_blocks(const ModelParams &params, const AdamState &adam, std::vector<ad::Parameter> &storage) {
    const auto named = params.named();
    storage.clear();
    storage.reserve(2 * named.size());
    BlockList out;
    for (std::size_t k = 0; k < named.size(); ++k) {
        ad::Parameter m(named[k].second->shape), v(named[k].second->shape);
        m.value = adam.m[k];
        v.value = adam.v[k];
        storage.push_back(std::move(m));
        storage.push_back(std::move(v));
    }
    for (std::size_t k = 0; k < named.size(); ++k) {
        out.emplace_back(std::string(kMomentPrefix) + named[k].first, &storage[2 * k]);
        out.emplace_back(std::string(kVelocityPrefix) + named[k].first, &storage[2 * k + 1]);
    }
    return out;
}

const std::string *find_value(const kv::Pairs &pairs, std::string_view key) {
    for (const auto &[k, v] : pairs)
        if (k == key) return &v;
    return nullptr;
}

} // namespace

TrainResult train(const TrainRun &run, std::span<const ProposalRecord> train_set,
                  std::span<const ProposalRecord> val_set) {
    const ModelConfig &mc = run.model;
    const TrainConfig &tc = run.train;
    mc.validate();
    tc.validate();
    if (train_set.empty()) throw ConfigError("train: the training split is empty");
    if (val_set.empty()) throw ConfigError("train: the validation split is empty");
    for (const auto &r : train_set) check_record(r, mc);
    for (const auto &r : val_set) check_record(r, mc);

    const RngStream root(tc.seed);
    TrainResult result;
    ModelParams params;
    AdamState adam;
    std::size_t start_epoch = 0;
    double best_loss = 0.0;

    if (run.resume) {
        Checkpoint ck = load_checkpoint(*run.resume);
        if (!(ck.config == mc)) throw ConfigError("resume: checkpoint model config differs from the run config");
        params = std::move(ck.params);
        adam = AdamState::for_params(params.named());
        const auto named = params.named();
        for (std::size_t k = 0; k < named.size(); ++k) {
            auto m = ck.state.find(std::string(kMomentPrefix) + named[k].name);
            auto v = ck.state.find(std::string(kVelocityPrefix) + named[k].name);
            if (m == ck.state.end() || v == ck.state.end())
                throw SchemaError("resume: checkpoint lacks optimizer state for " + named[k].name);
            adam.m[k] = m->second.value;
            adam.v[k] = v->second.value;
        }
        auto need = [&](std::string_view key) -> const std::string & {
            const std::string *v = find_value(ck.extra, key);
            if (v == nullptr) throw SchemaError("resume: checkpoint lacks '" + std::string(key) + "'");
            return *v;
        };
        start_epoch = kv::to_size("state.epochs_done", need("state.epochs_done"));
        adam.step = kv::to_size("state.adam_step", need("state.adam_step"));
        result.best_epoch = kv::to_size("state.best_epoch", need("state.best_epoch"));
        result.best_val_acc = kv::to_double("state.best_val_acc", need("state.best_val_acc"));
        best_loss = kv::to_double("state.best_val_loss", need("state.best_val_loss"));
        const auto best_path = run.resume->parent_path() / "best.ckpt";
        result.best = std::filesystem::exists(best_path) ? load_checkpoint(best_path).params : params;

        const auto log_path = run.resume->parent_path() / "metrics.jsonl";
        if (std::ifstream in(log_path); in) {
            for (std::string line; std::getline(in, line) && result.log.size() < start_epoch;)
                if (!line.empty()) result.log.push_back(EpochMetrics::from_json(line));
        }
    } else {
        RngStream init_rng = root.split(kInitKey);
        params = ModelParams::init(mc, init_rng);
        adam = AdamState::for_params(params.named());
        result.best = params;
    }

    std::ofstream log_file;
    if (run.out_dir) {
        std::filesystem::create_directories(*run.out_dir);
        log_file.open(*run.out_dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
        if (!log_file) throw Error("cannot write metrics log in " + run.out_dir->string());
        for (const auto &m : result.log) log_file << m.to_json() << '\n';
        log_file.flush();
    }

    const auto named = params.named();
    std::vector<std::size_t> order(train_set.size());
    Tape tape;
    std::size_t epochs_run = 0;
    bool stop = false;
    if (run.resume && tc.target_val_acc > 0.0 && result.best_val_acc >= tc.target_val_acc) stop = true;

    for (std::size_t epoch = start_epoch; epoch < tc.epochs && !stop; ++epoch) {
        if (run.max_epochs_this_run && epochs_run >= *run.max_epochs_this_run) break;
        const double lr = lr_at(epoch, tc);

        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream shuffle = root.split(kShuffleKey).split(epoch);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        const RngStream epoch_drop = root.split(kDropoutKey).split(epoch);

        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
            const std::size_t end = std::min(order.size(), b + tc.batch_size);
            const double inv = 1.0 / static_cast<double>(end - b);
            params.zero_grad();
            for (std::size_t pos = b; pos < end; ++pos) {
                tape.reset();
                RngStream drop = epoch_drop.split(pos);
                auto parts = total_loss(tape, train_set[order[pos]], params, mc, tc, RunMode{true, &drop});
                const double value = parts.total.item();
                if (!std::isfinite(value)) throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
                loss_sum += value;
                tape.backward(ad::scale(parts.total, inv));
            }
            clip_gradients(named, tc.clip_norm);
            adam_step(named, adam, lr, tc.beta1, tc.beta2, tc.adam_eps);
        }

        const Evaluation ev = evaluate(val_set, params, mc, tc);
        EpochMetrics m{epoch, loss_sum / static_cast<double>(order.size()), ev.loss, ev.token_acc, lr};
        result.log.push_back(m);
        ++epochs_run;

        const bool improved = ev.token_acc > result.best_val_acc ||
                              (ev.token_acc == result.best_val_acc && ev.loss < best_loss);
        if (improved) {
            result.best_val_acc = ev.token_acc;
            best_loss = ev.loss;
            result.best_epoch = epoch;
            result.best = params;
        }
        if (tc.target_val_acc > 0.0 && ev.token_acc >= tc.target_val_acc) {
            stop = true;
            result.stopped_early = true;
        }

        if (run.out_dir) {
            log_file << m.to_json() << '\n';
            log_file.flush();
            kv::Pairs header = tc.to_pairs();
            if (improved) save_checkpoint(*run.out_dir / "best.ckpt", mc, params, header);
            header.emplace_back("state.epochs_done", kv::to_text(epoch + 1));
            header.emplace_back("state.adam_step", kv::to_text(adam.step));
            header.emplace_back("state.best_epoch", kv::to_text(result.best_epoch));
            header.emplace_back("state.best_val_acc", kv::to_text(result.best_val_acc));
            header.emplace_back("state.best_val_loss", kv::to_text(best_loss));
            std::vector<ad::Parameter> storage;
            save_checkpoint(*run.out_dir / "last.ckpt", mc, params, header, optimizer_blocks(params, adam, storage));
        }
    }
    result.last = std::move(params);
    return result;
}

} // namespace gpas
