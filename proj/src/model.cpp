#include "gpas/model.hpp"

#include <cmath>
#include <limits>

#include "gpas/errors.hpp"

namespace gpas {

using ad::Parameter;
using ad::Shape;
using ad::Tape;
using ad::Var;

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::none: return "none";
    case Variant::agcn_out: return "agcn_out";
    case Variant::agcn_in: return "agcn_in";
    }
    return "?";
}

std::string_view to_string(GraphKind g) { return g == GraphKind::basic ? "basic" : "expanded"; }

Variant parse_variant(std::string_view s) {
    if (s == "none") return Variant::none;
    if (s == "agcn_out") return Variant::agcn_out;
    if (s == "agcn_in") return Variant::agcn_in;
    throw ConfigError("unknown variant '" + std::string(s) + "' (none, agcn_out, agcn_in)");
}

GraphKind parse_graph(std::string_view s) {
    if (s == "basic") return GraphKind::basic;
    if (s == "expanded") return GraphKind::expanded;
    throw ConfigError("unknown graph '" + std::string(s) + "' (basic, expanded)");
}

void ModelConfig::validate() const {
    if (graph == GraphKind::expanded && variant == Variant::none)
        throw ConfigError("the expanded graph needs variant agcn_out or agcn_in");
    if (rounds < 1) throw ConfigError("rounds must be at least 1");
    if (hidden == 0 || embed == 0 || visual_dim == 0) throw ConfigError("hidden, embed and visual_dim must be positive");
    if (segments == 0 || words == 0) throw ConfigError("segments and words must be positive");
    if (vocab_size < token::reserved_count)
        throw ConfigError("vocab_size must cover the " + std::to_string(token::reserved_count) + " reserved tokens");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob must lie in (0, 1]");
}

kv::Pairs ModelConfig::to_pairs() const {
    using kv::to_text;
    return {
        {"variant", std::string(to_string(variant))},
        {"graph", std::string(to_string(graph))},
        {"rounds", to_text(rounds)},
        {"hidden", to_text(hidden)},
        {"embed", to_text(embed)},
        {"visual_dim", to_text(visual_dim)},
        {"segments", to_text(segments)},
        {"words", to_text(words)},
        {"vocab_size", to_text(vocab_size)},
        {"keep_prob", to_text(keep_prob)},
        {"use_tvj", to_text(use_tvj)},
        {"raw_recurrence", to_text(raw_recurrence)},
        {"squash_refined_cell", to_text(squash_refined_cell)},
        {"attention_hidden", to_text(attention_hidden)},
        {"gcn_hidden", to_text(gcn_hidden)},
    };
}

std::vector<std::string> ModelConfig::apply(const kv::Pairs &pairs) {
    std::vector<std::string> unknown;
    for (const auto &[k, v] : pairs) {
        if (k == "variant") variant = parse_variant(v);
        else if (k == "graph") graph = parse_graph(v);
        else if (k == "rounds") rounds = kv::to_size(k, v);
        else if (k == "hidden") hidden = kv::to_size(k, v);
        else if (k == "embed") embed = kv::to_size(k, v);
        else if (k == "visual_dim") visual_dim = kv::to_size(k, v);
        else if (k == "segments") segments = kv::to_size(k, v);
        else if (k == "words") words = kv::to_size(k, v);
        else if (k == "vocab_size") vocab_size = kv::to_size(k, v);
        else if (k == "keep_prob") keep_prob = kv::to_double(k, v);
        else if (k == "use_tvj") use_tvj = kv::to_bool(k, v);
        else if (k == "raw_recurrence") raw_recurrence = kv::to_bool(k, v);
        else if (k == "squash_refined_cell") squash_refined_cell = kv::to_bool(k, v);
        else if (k == "attention_hidden") attention_hidden = kv::to_size(k, v);
        else if (k == "gcn_hidden") gcn_hidden = kv::to_size(k, v);
        else unknown.push_back(k);
    }
    return unknown;
}

// ---------------------------------------------------------------- parameters

namespace {

LayerWeights make_layer(const ModelConfig &cfg, std::size_t word_dim) {
    const std::size_t H = cfg.hidden, A = cfg.attention_width();
    LayerWeights l;
    if (cfg.use_tvj) {
        l.attention = AttentionWeights{Parameter({cfg.visual_dim, A}), Parameter({H, A}), Parameter({1, A}),
                                       Parameter({A, 1})};
    }
    const std::size_t in = cfg.use_tvj ? cfg.visual_dim + word_dim : word_dim;
    l.tvj = TvjWeights{Parameter({in, H}), Parameter({1, H})};
    l.lstm = LstmWeights{Parameter({H, 4 * H}), Parameter({H, 4 * H}), Parameter({1, 4 * H})};
    return l;
}

GcnEdgeWeights make_edge(const ModelConfig &cfg) {
    const std::size_t H = cfg.hidden, G = cfg.gcn_width();
    return GcnEdgeWeights{Parameter({H, H}), Parameter({H, G}), Parameter({H, G}), Parameter({1, G}),
                          Parameter({G, 1})};
}

void name_layer(std::vector<ad::NamedParameter> &out, const std::string &prefix, LayerWeights &l) {
    if (l.attention) {
        out.push_back({prefix + ".attention.visual", &l.attention->visual});
        out.push_back({prefix + ".attention.hidden", &l.attention->hidden});
        out.push_back({prefix + ".attention.bias", &l.attention->bias});
        out.push_back({prefix + ".attention.score", &l.attention->score});
    }
    out.push_back({prefix + ".tvj.weight", &l.tvj.weight});
    out.push_back({prefix + ".tvj.bias", &l.tvj.bias});
    out.push_back({prefix + ".lstm.input", &l.lstm.input});
    out.push_back({prefix + ".lstm.recurrent", &l.lstm.recurrent});
    out.push_back({prefix + ".lstm.bias", &l.lstm.bias});
}

void name_edge(std::vector<ad::NamedParameter> &out, const std::string &prefix, GcnEdgeWeights &e) {
    out.push_back({prefix + ".mix", &e.mix});
    out.push_back({prefix + ".att_target", &e.att_target});
    out.push_back({prefix + ".att_source", &e.att_source});
    out.push_back({prefix + ".att_bias", &e.att_bias});
    out.push_back({prefix + ".att_out", &e.att_out});
}

void set_forget_bias(LstmWeights &lstm, std::size_t H) {
    for (std::size_t j = H; j < 2 * H; ++j) lstm.bias.value[j] = 1.0;
}

} // namespace

ModelParams ModelParams::zeros(const ModelConfig &config) {
    config.validate();
    const std::size_t H = config.hidden, V = config.vocab_size;
    ModelParams p;
    p.embedding = Parameter({V, config.embed});
    p.word = make_layer(config, config.embed);
    if (config.has_segment_layer()) {
        p.segment = make_layer(config, config.embed);
        p.segment_input = Parameter({H, config.embed});
    }
    p.decoder = make_layer(config, config.embed);
    if (config.variant != Variant::none) {
        if (config.graph == GraphKind::basic) {
            p.word_to_decoder = make_edge(config);
        } else {
            p.word_to_segment = make_edge(config);
            p.segment_to_decoder = make_edge(config);
        }
    }
    p.output_weight = Parameter({H, V});
    p.output_bias = Parameter({1, V});
    p.disc_weight = Parameter({H, V});
    p.disc_bias = Parameter({1, V});
    return p;
}

ModelParams ModelParams::init(const ModelConfig &config, RngStream &rng) {
    ModelParams p = zeros(config);
    for (auto &np : p.named())
        for (double &v : np.param->value) v = rng.uniform(-0.08, 0.08);
    set_forget_bias(p.word.lstm, config.hidden);
    if (p.segment) set_forget_bias(p.segment->lstm, config.hidden);
    set_forget_bias(p.decoder.lstm, config.hidden);
    return p;
}

std::vector<ad::NamedParameter> ModelParams::named() {
    std::vector<ad::NamedParameter> out;
    out.push_back({"embedding", &embedding});
    name_layer(out, "word", word);
    if (segment) name_layer(out, "segment", *segment);
    if (segment_input) out.push_back({"segment_input", &*segment_input});
    name_layer(out, "decoder", decoder);
    if (word_to_decoder) name_edge(out, "gcn.word_to_decoder", *word_to_decoder);
    if (word_to_segment) name_edge(out, "gcn.word_to_segment", *word_to_segment);
    if (segment_to_decoder) name_edge(out, "gcn.segment_to_decoder", *segment_to_decoder);
    out.push_back({"output.weight", &output_weight});
    out.push_back({"output.bias", &output_bias});
    out.push_back({"disc.weight", &disc_weight});
    out.push_back({"disc.bias", &disc_bias});
    return out;
}

std::vector<std::pair<std::string, const Parameter *>> ModelParams::named() const {
    std::vector<std::pair<std::string, const Parameter *>> out;
    for (auto &np : const_cast<ModelParams *>(this)->named()) out.emplace_back(np.name, np.param);
    return out;
}

void ModelParams::zero_grad() {
    for (auto &np : named()) np.param->zero_grad();
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto &[name, p] : named()) n += p->value.size();
    return n;
}

// ---------------------------------------------------------------- building blocks

VisualAttention visual_attention(AttentionWeights &weights, Var visual, Var h_prev, Var visual_proj) {
    Tape &tape = visual.tape();
    Var proj = visual_proj.valid() ? visual_proj : ad::matmul(visual, tape.param(weights.visual));
    Var query = ad::add(ad::matmul(h_prev, tape.param(weights.hidden)), tape.param(weights.bias));
    Var scores = ad::matmul(ad::tanh(ad::add_row(proj, query)), tape.param(weights.score));
    Var alpha = ad::softmax_rows(ad::transpose(scores));
    return {ad::matmul(alpha, visual), alpha};
}

Var tvj_fuse(const ModelConfig &config, TvjWeights &weights, std::optional<Var> context, Var word,
             const RunMode &mode) {
    Tape &tape = word.tape();
    Var in = context ? ad::concat({*context, word}, 1) : word;
    Var f = ad::tanh(ad::add(ad::matmul(in, tape.param(weights.weight)), tape.param(weights.bias)));
    if (!mode.training) return f;
    if (mode.rng == nullptr) throw ConfigError("training mode needs a random stream");
    return ad::dropout(f, config.keep_prob, *mode.rng, true);
}

LstmOutput lstm_step(LstmWeights &weights, Var x, Var h_prev, Var c_prev) {
    Tape &tape = x.tape();
    const std::size_t H = h_prev.shape().cols;
    if (weights.recurrent.shape != Shape{H, 4 * H})
        throw DimensionError("lstm_step: recurrent weights " + weights.recurrent.shape.str() + " for hidden size " +
                             std::to_string(H));
    Var gates = ad::add(ad::add(ad::matmul(x, tape.param(weights.input)), ad::matmul(h_prev, tape.param(weights.recurrent))),
                        tape.param(weights.bias));
    Var i = ad::sigmoid(ad::slice(gates, 1, 0, H));
    Var f = ad::sigmoid(ad::slice(gates, 1, H, H));
    Var g = ad::tanh(ad::slice(gates, 1, 2 * H, H));
    Var o = ad::sigmoid(ad::slice(gates, 1, 3 * H, H));
    Var c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
    return {ad::mul(o, ad::tanh(c)), c, o};
}

Var agcn_weights(GcnEdgeWeights &edge, Var target, Var sources, Var source_proj) {
    if (sources.shape().rows == 0) throw DimensionError("agcn_weights: node has no predecessors");
    Tape &tape = target.tape();
    Var proj = source_proj.valid() ? source_proj : ad::matmul(sources, tape.param(edge.att_source));
    Var query = ad::add(ad::matmul(target, tape.param(edge.att_target)), tape.param(edge.att_bias));
    Var u = ad::matmul(ad::tanh(ad::add_row(proj, query)), tape.param(edge.att_out));
    return ad::softmax_rows(ad::transpose(u));
}

Var agcn_refine(Var target, Var sources, Var alpha, Var mix) {
    if (sources.shape().rows == 0) return target;
    return ad::tanh(ad::add(target, ad::matmul(ad::matmul(alpha, sources), mix)));
}

// ---------------------------------------------------------------- layers

namespace {

struct Refined {
    std::vector<Var> rounds;

    Var first() const { return rounds.front(); } // carried by the recurrence
    Var last() const { return rounds.back(); }
};

/// Refines one node for config.rounds rounds; sources[r] / proj[r] are the
/// predecessor features seen in round r.
Refined refine_node(GcnEdgeWeights &edge, Var z, std::span<const Var> sources, std::span<const Var> proj,
                    GcnAttention record, std::vector<GcnAttention> &log) {
    Tape &tape = z.tape();
    Var mix = tape.param(edge.mix);
    Refined out;
    for (std::size_t r = 0; r < sources.size(); ++r) {
        Var alpha = agcn_weights(edge, z, sources[r], proj[r]);
        z = agcn_refine(z, sources[r], alpha, mix);
        out.rounds.push_back(z);
        record.round = r;
        record.weights = alpha;
        log.push_back(record);
    }
    return out;
}

Var hidden_from_cell(const ModelConfig &cfg, Var o, Var c) { return ad::mul(o, cfg.squash_refined_cell ? ad::tanh(c) : c); }

Var stack(const std::vector<Var> &rows) { return ad::concat(std::span<const Var>(rows), 0); }

} // namespace

void check_record(const ProposalRecord &record, const ModelConfig &config) {
    if (record.segments.size() != config.segments)
        throw DimensionError("record '" + record.id + "' has " + std::to_string(record.segments.size()) +
                             " segments, model expects " + std::to_string(config.segments));
    auto check_ids = [&](const std::vector<TokenId> &ids, const char *what) {
        if (ids.size() != config.words)
            throw DimensionError("record '" + record.id + "': " + what + " has " + std::to_string(ids.size()) +
                                 " tokens, model expects " + std::to_string(config.words));
        for (TokenId id : ids)
            if (id >= config.vocab_size)
                throw LookupError("record '" + record.id + "': token id " + std::to_string(id) + " outside vocabulary");
    };
    for (const auto &s : record.segments) {
        check_ids(s.sentence, "a segment sentence");
        if (s.visual.size() != config.visual_dim)
            throw DimensionError("record '" + record.id + "' has visual dimension " + std::to_string(s.visual.size()) +
                                 ", model expects " + std::to_string(config.visual_dim));
    }
    check_ids(record.reference, "the reference");
}

EncodedProposal encode_words(Tape &tape, const ProposalRecord &record, ModelParams &params, const ModelConfig &config,
                             const RunMode &mode) {
    check_record(record, config);
    const std::size_t H = config.hidden;
    std::vector<double> flat;
    flat.reserve(config.segments * config.visual_dim);
    for (const auto &s : record.segments) flat.insert(flat.end(), s.visual.begin(), s.visual.end());

    EncodedProposal enc;
    enc.visual = tape.constant({config.segments, config.visual_dim}, std::move(flat));
    LayerWeights &layer = params.word;
    Var visual_proj;
    if (layer.attention) visual_proj = ad::matmul(enc.visual, tape.param(layer.attention->visual));
    Var table = tape.param(params.embedding);

    Var h = tape.zeros({1, H});
    Var c = tape.zeros({1, H});
    LayerState &st = enc.words;
    for (const auto &seg : record.segments) {
        for (TokenId id : seg.sentence) {
            std::optional<Var> ctx;
            if (layer.attention) {
                auto va = visual_attention(*layer.attention, enc.visual, h, visual_proj);
                ctx = va.context;
                enc.word_visual_alpha.push_back(va.weights);
            }
            Var x = tvj_fuse(config, layer.tvj, ctx, ad::gather_row(table, id), mode);
            auto out = lstm_step(layer.lstm, x, h, c);
            h = out.h;
            c = out.c;
            st.h.push_back(out.h);
            st.c.push_back(out.c);
            st.h_refined.push_back(out.h);
            st.c_refined.push_back(out.c);
            st.o.push_back(out.o);
        }
    }
    return enc;
}

void encode_segments(EncodedProposal &enc, ModelParams &params, const ModelConfig &config, const RunMode &mode) {
    if (!config.has_segment_layer()) throw ConfigError("encode_segments needs the expanded graph");
    if (!params.segment || !params.segment_input || !params.word_to_segment)
        throw ConfigError("parameters lack the segment layer");
    Tape &tape = enc.visual.tape();
    const std::size_t H = config.hidden, Lk = config.words;
    const bool in_cell = config.variant == Variant::agcn_in;
    GcnEdgeWeights &edge = *params.word_to_segment;
    LayerWeights &layer = *params.segment;

    Var feats = stack(in_cell ? enc.words.c_refined : enc.words.h_refined);
    Var feats_proj = ad::matmul(feats, tape.param(edge.att_source));
    Var visual_proj;
    if (layer.attention) visual_proj = ad::matmul(enc.visual, tape.param(layer.attention->visual));
    Var slot = tape.param(*params.segment_input);

    enc.segment_rounds.assign(config.rounds, {});
    LayerState st;
    Var h = tape.zeros({1, H});
    Var c = tape.zeros({1, H});
    for (std::size_t i = 0; i < config.segments; ++i) {
        std::optional<Var> ctx;
        if (layer.attention) {
            auto va = visual_attention(*layer.attention, enc.visual, h, visual_proj);
            ctx = va.context;
            enc.segment_visual_alpha.push_back(va.weights);
        }
        Var word_in = ad::matmul(enc.words.h_refined[(i + 1) * Lk - 1], slot);
        Var x = tvj_fuse(config, layer.tvj, ctx, word_in, mode);
        auto out = lstm_step(layer.lstm, x, h, c);

        const std::vector<Var> src(config.rounds, ad::slice(feats, 0, i * Lk, Lk));
        const std::vector<Var> src_proj(config.rounds, ad::slice(feats_proj, 0, i * Lk, Lk));
        GcnAttention rec{Level::segment, i, 0, Level::word, i * Lk, Lk, {}};
        auto ref = refine_node(edge, in_cell ? out.c : out.h, src, src_proj, rec, enc.gcn_attention);
        for (std::size_t r = 0; r < config.rounds; ++r) enc.segment_rounds[r].push_back(ref.rounds[r]);

        st.h.push_back(out.h);
        st.c.push_back(out.c);
        st.o.push_back(out.o);
        if (in_cell) {
            st.c_refined.push_back(ref.last());
            st.h_refined.push_back(hidden_from_cell(config, out.o, ref.last()));
            c = ref.first();
            h = hidden_from_cell(config, out.o, ref.first());
        } else {
            st.c_refined.push_back(out.c);
            st.h_refined.push_back(ref.last());
            c = out.c;
            h = config.raw_recurrence ? out.h : ref.first();
        }
    }
    enc.segments = std::move(st);
}

void prepare_upstream(EncodedProposal &enc, ModelParams &params, const ModelConfig &config) {
    enc.upstream.clear();
    enc.upstream_proj.clear();
    if (config.variant == Variant::none) return;
    Tape &tape = enc.visual.tape();
    if (config.graph == GraphKind::basic) {
        if (!params.word_to_decoder) throw ConfigError("parameters lack the word-to-decoder graph weights");
        Var feats = stack(config.variant == Variant::agcn_in ? enc.words.c_refined : enc.words.h_refined);
        Var proj = ad::matmul(feats, tape.param(params.word_to_decoder->att_source));
        enc.upstream.assign(config.rounds, feats);
        enc.upstream_proj.assign(config.rounds, proj);
        return;
    }
    if (!params.segment_to_decoder) throw ConfigError("parameters lack the segment-to-decoder graph weights");
    if (enc.segment_rounds.size() != config.rounds) throw ConfigError("prepare_upstream: segments not encoded");
    for (const auto &rows : enc.segment_rounds) {
        Var feats = stack(rows);
        enc.upstream.push_back(feats);
        enc.upstream_proj.push_back(ad::matmul(feats, tape.param(params.segment_to_decoder->att_source)));
    }
}

EncodedProposal encode(Tape &tape, const ProposalRecord &record, ModelParams &params, const ModelConfig &config,
                       const RunMode &mode) {
    EncodedProposal enc = encode_words(tape, record, params, config, mode);
    if (config.has_segment_layer()) encode_segments(enc, params, config, mode);
    prepare_upstream(enc, params, config);
    return enc;
}

DecoderState start_decoder(const EncodedProposal &enc) {
    DecoderState st;
    st.h = enc.words.h.back();
    st.c = enc.words.c.back();
    return st;
}

Var decode_step(DecoderState &state, TokenId prev_word, const EncodedProposal &enc, ModelParams &params,
                const ModelConfig &config, const RunMode &mode) {
    if (state.step >= config.words)
        throw DimensionError("decode_step: step " + std::to_string(state.step) + " past the output length " +
                             std::to_string(config.words));
    if (prev_word >= config.vocab_size) throw LookupError("decode_step: token id outside vocabulary");
    Tape &tape = enc.visual.tape();
    LayerWeights &layer = params.decoder;

    std::optional<Var> ctx;
    if (layer.attention) {
        if (!state.visual_proj.valid()) state.visual_proj = ad::matmul(enc.visual, tape.param(layer.attention->visual));
        auto va = visual_attention(*layer.attention, enc.visual, state.h, state.visual_proj);
        ctx = va.context;
        state.visual_alpha.push_back(va.weights);
    }
    Var x = tvj_fuse(config, layer.tvj, ctx, ad::gather_row(tape.param(params.embedding), prev_word), mode);
    auto out = lstm_step(layer.lstm, x, state.h, state.c);

    Var h_out = out.h;
    Var c_out = out.c;
    if (config.variant == Variant::none) {
        state.h = out.h;
        state.c = out.c;
    } else {
        const bool basic = config.graph == GraphKind::basic;
        GcnEdgeWeights *edge = basic ? (params.word_to_decoder ? &*params.word_to_decoder : nullptr)
                                     : (params.segment_to_decoder ? &*params.segment_to_decoder : nullptr);
        if (edge == nullptr) throw ConfigError("parameters lack the decoder graph weights");
        if (enc.upstream.size() != config.rounds) throw ConfigError("decode_step: upstream features not prepared");
        const std::size_t support = basic ? config.segments * config.words : config.segments;
        GcnAttention rec{Level::decoder, state.step, 0, basic ? Level::word : Level::segment, 0, support, {}};
        const bool in_cell = config.variant == Variant::agcn_in;
        auto ref = refine_node(*edge, in_cell ? out.c : out.h, enc.upstream, enc.upstream_proj, rec,
                               state.gcn_attention);
        if (in_cell) {
            c_out = ref.last();
            h_out = hidden_from_cell(config, out.o, ref.last());
            state.c = ref.first();
            state.h = hidden_from_cell(config, out.o, ref.first());
        } else {
            h_out = ref.last();
            state.c = out.c;
            state.h = config.raw_recurrence ? out.h : ref.first();
        }
    }
    state.states.h.push_back(out.h);
    state.states.c.push_back(out.c);
    state.states.o.push_back(out.o);
    state.states.h_refined.push_back(h_out);
    state.states.c_refined.push_back(c_out);
    ++state.step;

    Var feat = h_out;
    if (mode.training) {
        if (mode.rng == nullptr) throw ConfigError("training mode needs a random stream");
        feat = ad::dropout(h_out, config.keep_prob, *mode.rng, true);
    }
    return ad::add(ad::matmul(feat, tape.param(params.output_weight)), tape.param(params.output_bias));
}

ForwardPass forward_teacher_forced(Tape &tape, const ProposalRecord &record, ModelParams &params,
                                   const ModelConfig &config, const RunMode &mode) {
    ForwardPass fp;
    fp.encoder = encode(tape, record, params, config, mode);
    fp.decoder = start_decoder(fp.encoder);
    std::vector<Var> rows;
    for (std::size_t t = 0; t < config.words; ++t) {
        const TokenId prev = t == 0 ? token::bos : record.reference[t - 1];
        rows.push_back(decode_step(fp.decoder, prev, fp.encoder, params, config, mode));
    }
    fp.logits = stack(rows);
    return fp;
}

Decoded greedy_decode(const ProposalRecord &record, ModelParams &params, const ModelConfig &config) {
    Tape tape;
    const RunMode eval;
    EncodedProposal enc = encode(tape, record, params, config, eval);
    DecoderState st = start_decoder(enc);
    Decoded out;
    TokenId prev = token::bos;
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> z(config.vocab_size);
    for (std::size_t t = 0; t < config.words; ++t) {
        Var logits = decode_step(st, prev, enc, params, config, eval);
        auto v = logits.value();
        std::copy(v.begin(), v.end(), z.begin());
        z[token::pad] = neg_inf;
        z[token::bos] = neg_inf;
        TokenId best = 0;
        for (TokenId k = 1; k < z.size(); ++k)
            if (z[k] > z[best]) best = k;
        if (!std::isfinite(z[best])) throw NumericError("greedy_decode: non-finite logits");
        double denom = 0.0;
        for (double x : z) denom += std::exp(x - z[best]);
        out.ids.push_back(best);
        out.probs.push_back(1.0 / denom);
        if (best == token::eos) break;
        prev = best;
    }
    return out;
}

double confidence_score(std::span<const double> token_probs) {
    if (token_probs.empty()) throw NumericError("confidence score is undefined for an empty sentence");
    double total = 0.0;
    for (double p : token_probs) total += std::log(p);
    return total / static_cast<double>(token_probs.size());
}

} // namespace gpas
