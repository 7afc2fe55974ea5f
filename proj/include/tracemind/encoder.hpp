#pragma once

#include <array>
#include <functional>
#include <optional>

#include "tracemind/embed.hpp"

namespace tracemind {

// The encoder works on three view slots: environment, middle (action for
// control traces, keyword for browsing traces), and description.
enum class Slot { env = 0, mid = 1, desc = 2 };
inline constexpr int kNumSlots = 3;
inline constexpr int kNumPairs = 6;  // ordered slot pairs

Slot slot_of(ViewKey v);
const char* to_string(Slot s);

// Fixed enumeration of the six ordered slot pairs.
std::array<std::pair<Slot, Slot>, kNumPairs> ordered_pairs();
int pair_index(Slot p, Slot q);

struct EncoderConfig {
    int d_raw = 3072;      // provider embedding width
    int hidden = 256;      // projection head hidden width
    int dim = 256;         // shared latent width d
    int pred_hidden = 128; // predictor bottleneck width
    double lambda_pred = 0.1;
    double lambda_rec = 0.05;
    double tau_temp = 0.1;
    double learning_rate = 1e-3;
    double dropout = 0.05;
    double ln_eps = 1e-5;
    double w_env = 0.4, w_mid = 0.3, w_desc = 0.3;  // fusion weights, sum to 1
    uint64_t seed = 0;
    bool strict_pred_as_printed = false;  // second predictor term reads z^(p), as typeset
    std::string optimizer = "sgd";        // "sgd" (default) or "adam"

    void validate() const;
};

EncoderConfig encoder_config_from_json(const json& j);
json encoder_config_to_json(const EncoderConfig& cfg);

struct Affine {
    Mat W;  // out x in
    Vec b;  // out
    Vec apply(const Vec& x) const { return W * x + b; }
};

struct ProjectionHead {
    Affine l1, l2;
    Vec ln_gain, ln_bias;
};

struct Predictor {
    Affine l1, l2;  // two affine layers, no nonlinearity between
    Vec apply(const Vec& z) const { return l2.apply(l1.apply(z)); }
};

struct EncoderParams {
    EncoderConfig cfg;
    std::array<ProjectionHead, kNumSlots> heads;
    std::array<Predictor, kNumPairs> predictors;
    std::array<Affine, kNumSlots> decoders;  // dim -> d_raw
    // Fixed per-view output centers, set from the training corpus after the
    // last epoch. Centering keeps retrieval cosines spread out; zero until
    // trained. Not a gradient-updated tensor.
    std::array<Vec, kNumSlots> view_centers;
};

// Seeded random initialization (uniform Xavier-style bounds).
EncoderParams init_encoder(const EncoderConfig& cfg);

// Mirrors the parameter tensors; used for gradient accumulation.
struct EncoderGrads {
    std::array<ProjectionHead, kNumSlots> heads;
    std::array<Predictor, kNumPairs> predictors;
    std::array<Affine, kNumSlots> decoders;
};
EncoderGrads zero_grads(const EncoderParams& p);

// Flat walk over every parameter coefficient, in a fixed order shared between
// params and grads. Enables generic finite-difference checks and SGD updates.
void for_each_tensor(EncoderParams& p, const std::function<void(const std::string&, Mat*, Vec*)>& fn);
void for_each_tensor(EncoderGrads& g, const std::function<void(const std::string&, Mat*, Vec*)>& fn);

struct Minibatch {
    std::array<Mat, kNumSlots> x;  // N x d_raw per view
    int size() const { return static_cast<int>(x[0].rows()); }
    void validate(const EncoderConfig& cfg) const;  // N >= 2, widths match
};

// --- forward -----------------------------------------------------------------

// Projects one raw view embedding into the shared space. Dropout is active
// only in train mode (mask drawn from rng, or from cfg.seed when absent).
Vec project(const Vec& x, Slot view, const EncoderParams& params, bool train_mode = false,
            std::mt19937_64* rng = nullptr);

// Weighted fusion z = w_env z^(E) + w_mid z^(A|K) + w_desc z^(D).
Vec fuse(const std::array<Vec, kNumSlots>& per_view, const EncoderParams& params);

struct SharedEmbedding {
    Vec z;
    std::array<Vec, kNumSlots> per_view;
};

SharedEmbedding encode_unit(const IntentUnit& unit, const EncoderParams& params,
                            EmbeddingProvider& provider);

// Raw per-view embeddings of a unit arranged by slot.
std::array<Vec, kNumSlots> raw_views(const IntentUnit& unit, EmbeddingProvider& provider);

// --- losses ------------------------------------------------------------------

struct LossBreakdown {
    double con = 0, pred = 0, rec = 0, total = 0;
};

double loss_con(const Minibatch& batch, const EncoderParams& params);
double loss_pred(const Minibatch& batch, const EncoderParams& params);
double loss_rec(const Minibatch& batch, const EncoderParams& params);
double total_loss(const Minibatch& batch, const EncoderParams& params);

struct LossWeights {
    double con = 1.0, pred = 0.0, rec = 0.0;
};

// Forward + backward in one pass; grads may be null for loss-only evaluation.
LossBreakdown encoder_backward(const Minibatch& batch, const EncoderParams& params,
                               const LossWeights& w, EncoderGrads* grads,
                               bool train_mode = false, std::mt19937_64* rng = nullptr);

namespace detail {
// Contrastive / reconstruction terms over explicit projections; lets tests
// evaluate hand-constructed latents directly.
double loss_con_views(const std::vector<Mat>& z_views, double tau);
double loss_rec_views(const std::vector<Mat>& z_views, const std::vector<Mat>& x_views,
                      const std::vector<Affine>& decoders);
}  // namespace detail

// Diagnostic only: the averaged map (G_{p->q} + G_{q->p})/2 applied to z.
Vec averaged_predictor(const EncoderParams& params, Slot p, Slot q, const Vec& z);

// --- training ----------------------------------------------------------------

using UnitViews = std::array<Vec, kNumSlots>;

struct TrainLog {
    std::vector<double> epoch_loss;  // mean total loss per epoch
};

// Seeded-shuffle minibatch gradient descent on all parameters.
// Zero epochs leaves params untouched; non-finite loss aborts with the epoch.
TrainLog train(const std::vector<UnitViews>& corpus, EncoderParams& params, int epochs,
               int batch_size, bool verbose = false);

// --- checkpoints ---------------------------------------------------------------

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace tracemind
