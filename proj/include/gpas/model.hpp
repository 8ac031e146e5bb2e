#pragma once

// Graph-coupled LSTM summarizer.
//
// Three recurrent layers built from the same basic unit (visual attention ->
// textual/visual fusion -> LSTM cell):
//   * encoder-word layer: one chain over all L_m x L_k input words,
//   * encoder-segment layer (expanded graph only): one step per segment,
//   * decoder: L_k output steps.
// Attentional graph convolution refines node features across layers:
//   z_hat_i = tanh(z_i + (sum_j alpha_ij z_j) W),  alpha_i = softmax_j(MLP([z_i; z_j]))
// where j ranges over the predecessors of node i. Word nodes have no
// predecessors and pass through unchanged. With aGCN-out the node feature is
// the hidden state; with aGCN-in it is the cell state, and the hidden state
// becomes o * c_hat.
//
// rounds > 1 repeats the update on every refined node, starting from the
// node's previous-round value and reading its predecessors' same-round
// values. The recurrences themselves are not re-run: each chain carries the
// first-round value forward.
//
// Row-vector convention throughout: a vector is a 1 x n node and a linear
// map is x * W.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpas/autodiff.hpp"
#include "gpas/grad_check.hpp"
#include "gpas/kv.hpp"
#include "gpas/rng.hpp"
#include "gpas/text.hpp"

namespace gpas {

enum class Variant { none, agcn_out, agcn_in };
enum class GraphKind { basic, expanded };

std::string_view to_string(Variant v);
std::string_view to_string(GraphKind g);
Variant parse_variant(std::string_view s);
GraphKind parse_graph(std::string_view s);

struct ModelConfig {
    Variant variant = Variant::none;
    GraphKind graph = GraphKind::basic;
    std::size_t rounds = 1;
    std::size_t hidden = 64;
    std::size_t embed = 32;
    std::size_t visual_dim = 16;
    std::size_t segments = 5; // L_m
    std::size_t words = 8;    // L_k
    std::size_t vocab_size = 0;
    double keep_prob = 0.8;
    bool use_tvj = true;
    /// aGCN-out: recur on the raw hidden state instead of the refined one.
    bool raw_recurrence = false;
    /// aGCN-in: h_hat = o * tanh(c_hat) instead of o * c_hat.
    bool squash_refined_cell = false;
    /// Visual attention perceptron width; 0 means `hidden`.
    std::size_t attention_hidden = 0;
    /// Graph attention perceptron width; 0 means hidden / 2.
    std::size_t gcn_hidden = 0;

    std::size_t attention_width() const { return attention_hidden != 0 ? attention_hidden : hidden; }
    std::size_t gcn_width() const { return gcn_hidden != 0 ? gcn_hidden : std::max<std::size_t>(1, hidden / 2); }
    bool has_segment_layer() const { return graph == GraphKind::expanded; }

    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    kv::Pairs to_pairs() const;
    /// Applies recognised keys onto *this; returns the keys it did not recognise.
    std::vector<std::string> apply(const kv::Pairs &pairs);

    bool operator==(const ModelConfig &) const = default;
};

// ---------------------------------------------------------------- weights

/// Gates are packed as [input | forget | candidate | output].
struct LstmWeights {
    ad::Parameter input;     // [in x 4H]
    ad::Parameter recurrent; // [H x 4H]
    ad::Parameter bias;      // [1 x 4H]
};

struct AttentionWeights {
    ad::Parameter visual; // [D_v x A]
    ad::Parameter hidden; // [H x A]
    ad::Parameter bias;   // [1 x A]
    ad::Parameter score;  // [A x 1]
};

struct TvjWeights {
    ad::Parameter weight; // [(D_v + E) x H], or [E x H] without visual fusion
    ad::Parameter bias;   // [1 x H]
};

/// One edge type of the graph: mixing matrix plus its attention perceptron.
/// The perceptron's first layer acting on [z_i; z_j] is stored as two
/// blocks, target and source, so the source half can be shared across targets.
struct GcnEdgeWeights {
    ad::Parameter mix;        // [H x H]
    ad::Parameter att_target; // [H x G]
    ad::Parameter att_source; // [H x G]
    ad::Parameter att_bias;   // [1 x G]
    ad::Parameter att_out;    // [G x 1]
};

struct LayerWeights {
    std::optional<AttentionWeights> attention; // absent without visual fusion
    TvjWeights tvj;
    LstmWeights lstm;
};

class ModelParams {
  public:
    ModelParams() = default;

    /// Uniform(-0.08, 0.08) everywhere except LSTM forget-gate biases, which start at 1.
    static ModelParams init(const ModelConfig &config, RngStream &rng);
    /// Same layout as init(), all zeros.
    static ModelParams zeros(const ModelConfig &config);

    ad::Parameter embedding; // [V x E]
    LayerWeights word;
    std::optional<LayerWeights> segment;
    std::optional<ad::Parameter> segment_input; // [H x E]
    LayerWeights decoder;
    std::optional<GcnEdgeWeights> word_to_decoder;
    std::optional<GcnEdgeWeights> word_to_segment;
    std::optional<GcnEdgeWeights> segment_to_decoder;
    ad::Parameter output_weight; // [H x V]
    ad::Parameter output_bias;   // [1 x V]
    ad::Parameter disc_weight;   // [H x V]
    ad::Parameter disc_bias;     // [1 x V]

    /// Every allocated block with a stable dotted name, in a fixed order.
    std::vector<ad::NamedParameter> named();
    std::vector<std::pair<std::string, const ad::Parameter *>> named() const;

    void zero_grad();
    std::size_t scalar_count() const;
};

// ---------------------------------------------------------------- forward pass

enum class Level { word, segment, decoder };

/// One layer's node states. For word nodes and variant none, refined == raw.
struct LayerState {
    std::vector<ad::Var> h;
    std::vector<ad::Var> c;
    std::vector<ad::Var> h_refined;
    std::vector<ad::Var> c_refined;
    std::vector<ad::Var> o;
};

/// Graph attention weights of one target node in one refinement round. The
/// support is the contiguous range [support_begin, support_begin + support_size)
/// of the source level's nodes; every other node has weight zero.
struct GcnAttention {
    Level level = Level::decoder;
    std::size_t node = 0;
    std::size_t round = 0;
    Level source = Level::word;
    std::size_t support_begin = 0;
    std::size_t support_size = 0;
    ad::Var weights; // [1 x support_size]
};

/// Training switches dropout on; rng must then be non-null.
struct RunMode {
    bool training = false;
    RngStream *rng = nullptr;
};

struct VisualAttention {
    ad::Var context; // [1 x D_v]
    ad::Var weights; // [1 x L_m]
};

/// score_i = w . tanh(v_i W_v + h_prev W_h + b); weights = softmax(score);
/// context = sum_i weights_i v_i. visual_proj may carry a precomputed V W_v.
VisualAttention visual_attention(AttentionWeights &weights, ad::Var visual, ad::Var h_prev,
                                 ad::Var visual_proj = {});

/// tanh([context ; word] W + b) followed by dropout; without a context
/// (no visual fusion) just tanh(word W + b).
ad::Var tvj_fuse(const ModelConfig &config, TvjWeights &weights, std::optional<ad::Var> context, ad::Var word,
                 const RunMode &mode);

struct LstmOutput {
    ad::Var h;
    ad::Var c;
    ad::Var o;
};

LstmOutput lstm_step(LstmWeights &weights, ad::Var x, ad::Var h_prev, ad::Var c_prev);

/// alpha_i = softmax_j(MLP([z_i; z_j])) over the rows of `sources`.
/// Throws DimensionError for an empty source set; callers skip such nodes.
ad::Var agcn_weights(GcnEdgeWeights &edge, ad::Var target, ad::Var sources, ad::Var source_proj = {});

/// tanh(target + (alpha * sources) W); returns target unchanged when there are no sources.
ad::Var agcn_refine(ad::Var target, ad::Var sources, ad::Var alpha, ad::Var mix);

/// Everything the decoder consumes from the encoder side.
struct EncodedProposal {
    ad::Var visual; // [L_m x D_v]
    LayerState words;
    std::optional<LayerState> segments;
    std::vector<ad::Var> word_visual_alpha;
    std::vector<ad::Var> segment_visual_alpha;
    /// Decoder predecessor features per refinement round: rows are word nodes
    /// (basic graph) or segment nodes (expanded graph); hidden states for
    /// aGCN-out, cell states for aGCN-in. Empty for variant none.
    std::vector<ad::Var> upstream;
    std::vector<ad::Var> upstream_proj;
    /// Refined segment features per round (expanded graph).
    std::vector<std::vector<ad::Var>> segment_rounds;
    std::vector<GcnAttention> gcn_attention;
};

/// Throws DimensionError / LookupError when the record does not match config.
void check_record(const ProposalRecord &record, const ModelConfig &config);

/// Encoder-word layer: one LSTM chain over all L_m x L_k words.
EncodedProposal encode_words(ad::Tape &tape, const ProposalRecord &record, ModelParams &params,
                             const ModelConfig &config, const RunMode &mode);

/// Encoder-segment layer (expanded graph only), filling enc.segments.
void encode_segments(EncodedProposal &enc, ModelParams &params, const ModelConfig &config, const RunMode &mode);

/// Builds enc.upstream / enc.upstream_proj for every refinement round.
void prepare_upstream(EncodedProposal &enc, ModelParams &params, const ModelConfig &config);

/// Runs encode_words, encode_segments (expanded graph) and prepare_upstream.
EncodedProposal encode(ad::Tape &tape, const ProposalRecord &record, ModelParams &params, const ModelConfig &config,
                       const RunMode &mode);

/// h and c are the values carried to the next step, which differ from the
/// refined outputs when rounds > 1 or with raw recurrence.
struct DecoderState {
    ad::Var h;
    ad::Var c;
    std::size_t step = 0;
    ad::Var visual_proj;
    LayerState states;
    std::vector<ad::Var> visual_alpha;
    std::vector<GcnAttention> gcn_attention;
};

/// Decoder starts from the final encoder-word state.
DecoderState start_decoder(const EncodedProposal &enc);

/// One decoder step fed with prev_word; returns logits [1 x V] computed from
/// the final-round refined hidden state.
ad::Var decode_step(DecoderState &state, TokenId prev_word, const EncodedProposal &enc, ModelParams &params,
                    const ModelConfig &config, const RunMode &mode);

struct ForwardPass {
    EncodedProposal encoder;
    DecoderState decoder;
    ad::Var logits; // [L_k x V]
};

/// Teacher forcing: step t is fed <bos> for t = 0 and reference[t - 1] after.
ForwardPass forward_teacher_forced(ad::Tape &tape, const ProposalRecord &record, ModelParams &params,
                                   const ModelConfig &config, const RunMode &mode);

struct Decoded {
    std::vector<TokenId> ids; // includes the final <eos> when one was emitted
    std::vector<double> probs;
};

/// Argmax decoding in evaluation mode; <pad> and <bos> are never emitted,
/// ties go to the smallest id, stops after <eos> or L_k steps.
Decoded greedy_decode(const ProposalRecord &record, ModelParams &params, const ModelConfig &config);

/// Mean log-probability of the generated tokens (including <eos>).
double confidence_score(std::span<const double> token_probs);

} // namespace gpas
