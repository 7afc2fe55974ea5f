#include "tracemind/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace tracemind {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Mat affine_rows(const Mat& X, const Affine& a) {
    return (X * a.W.transpose()).rowwise() + a.b.transpose();
}

}  // namespace

Slot slot_of(ViewKey v) {
    switch (v) {
        case ViewKey::E: return Slot::env;
        case ViewKey::A:
        case ViewKey::K: return Slot::mid;
        case ViewKey::D: return Slot::desc;
    }
    return Slot::desc;
}

const char* to_string(Slot s) {
    switch (s) {
        case Slot::env: return "env";
        case Slot::mid: return "mid";
        case Slot::desc: return "desc";
    }
    return "?";
}

std::array<std::pair<Slot, Slot>, kNumPairs> ordered_pairs() {
    using S = Slot;
    return {{{S::env, S::mid}, {S::mid, S::env}, {S::env, S::desc},
             {S::desc, S::env}, {S::mid, S::desc}, {S::desc, S::mid}}};
}

int pair_index(Slot p, Slot q) {
    auto pairs = ordered_pairs();
    for (int i = 0; i < kNumPairs; ++i)
        if (pairs[i].first == p && pairs[i].second == q) return i;
    fail(ErrorClass::precondition, "invalid slot pair");
}

void EncoderConfig::validate() const {
    if (d_raw < 1 || hidden < 1 || dim < 1 || pred_hidden < 1)
        fail(ErrorClass::validation, "encoder widths must be positive");
    if (tau_temp <= 0) fail(ErrorClass::validation, "tau_temp must be positive");
    if (dropout < 0 || dropout >= 1) fail(ErrorClass::validation, "dropout must be in [0,1)");
    double s = w_env + w_mid + w_desc;
    if (std::abs(s - 1.0) > 1e-9)
        fail(ErrorClass::validation, "fusion weights must sum to 1, got " + std::to_string(s));
    if (optimizer != "sgd" && optimizer != "adam")
        fail(ErrorClass::validation, "unknown optimizer '" + optimizer + "'");
}

EncoderConfig encoder_config_from_json(const json& j) {
    EncoderConfig c;
    c.d_raw = j.value("d_raw", c.d_raw);
    c.hidden = j.value("hidden", c.hidden);
    c.dim = j.value("dim", c.dim);
    c.pred_hidden = j.value("pred_hidden", c.pred_hidden);
    c.lambda_pred = j.value("lambda_pred", c.lambda_pred);
    c.lambda_rec = j.value("lambda_rec", c.lambda_rec);
    c.tau_temp = j.value("tau_temp", c.tau_temp);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.dropout = j.value("dropout", c.dropout);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        c.w_env = f.at(0).get<double>();
        c.w_mid = f.at(1).get<double>();
        c.w_desc = f.at(2).get<double>();
    }
    c.seed = j.value("seed", c.seed);
    c.strict_pred_as_printed = j.value("strict_pred_as_printed", c.strict_pred_as_printed);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.validate();
    return c;
}

json encoder_config_to_json(const EncoderConfig& c) {
    json j;
    j["d_raw"] = c.d_raw;
    j["hidden"] = c.hidden;
    j["dim"] = c.dim;
    j["pred_hidden"] = c.pred_hidden;
    j["lambda_pred"] = c.lambda_pred;
    j["lambda_rec"] = c.lambda_rec;
    j["tau_temp"] = c.tau_temp;
    j["learning_rate"] = c.learning_rate;
    j["dropout"] = c.dropout;
    j["ln_eps"] = c.ln_eps;
    j["fusion"] = {c.w_env, c.w_mid, c.w_desc};
    j["seed"] = c.seed;
    j["strict_pred_as_printed"] = c.strict_pred_as_printed;
    j["optimizer"] = c.optimizer;
    return j;
}

namespace {

Mat xavier(int rows, int cols, std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
    return m;
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    auto rng = seeded_rng(cfg.seed, "encoder-init");
    for (int v = 0; v < kNumSlots; ++v) {
        auto& h = p.heads[v];
        h.l1 = {xavier(cfg.hidden, cfg.d_raw, rng), Vec::Zero(cfg.hidden)};
        h.l2 = {xavier(cfg.dim, cfg.hidden, rng), Vec::Zero(cfg.dim)};
        h.ln_gain = Vec::Ones(cfg.dim);
        h.ln_bias = Vec::Zero(cfg.dim);
    }
    for (int k = 0; k < kNumPairs; ++k) {
        p.predictors[k].l1 = {xavier(cfg.pred_hidden, cfg.dim, rng), Vec::Zero(cfg.pred_hidden)};
        p.predictors[k].l2 = {xavier(cfg.dim, cfg.pred_hidden, rng), Vec::Zero(cfg.dim)};
    }
    for (int v = 0; v < kNumSlots; ++v)
        p.decoders[v] = {xavier(cfg.d_raw, cfg.dim, rng), Vec::Zero(cfg.d_raw)};
    for (int v = 0; v < kNumSlots; ++v) p.view_centers[v] = Vec::Zero(cfg.dim);
    return p;
}

EncoderGrads zero_grads(const EncoderParams& p) {
    EncoderGrads g;
    for (int v = 0; v < kNumSlots; ++v) {
        g.heads[v].l1 = {Mat::Zero(p.heads[v].l1.W.rows(), p.heads[v].l1.W.cols()),
                         Vec::Zero(p.heads[v].l1.b.size())};
        g.heads[v].l2 = {Mat::Zero(p.heads[v].l2.W.rows(), p.heads[v].l2.W.cols()),
                         Vec::Zero(p.heads[v].l2.b.size())};
        g.heads[v].ln_gain = Vec::Zero(p.heads[v].ln_gain.size());
        g.heads[v].ln_bias = Vec::Zero(p.heads[v].ln_bias.size());
    }
    for (int k = 0; k < kNumPairs; ++k) {
        g.predictors[k].l1 = {Mat::Zero(p.predictors[k].l1.W.rows(), p.predictors[k].l1.W.cols()),
                              Vec::Zero(p.predictors[k].l1.b.size())};
        g.predictors[k].l2 = {Mat::Zero(p.predictors[k].l2.W.rows(), p.predictors[k].l2.W.cols()),
                              Vec::Zero(p.predictors[k].l2.b.size())};
    }
    for (int v = 0; v < kNumSlots; ++v)
        g.decoders[v] = {Mat::Zero(p.decoders[v].W.rows(), p.decoders[v].W.cols()),
                         Vec::Zero(p.decoders[v].b.size())};
    return g;
}

namespace {

template <class T>
void walk_tensors(T& t, const std::function<void(const std::string&, Mat*, Vec*)>& fn) {
    for (int v = 0; v < kNumSlots; ++v) {
        std::string base = "head" + std::to_string(v);
        fn(base + ".l1.W", &t.heads[v].l1.W, nullptr);
        fn(base + ".l1.b", nullptr, &t.heads[v].l1.b);
        fn(base + ".l2.W", &t.heads[v].l2.W, nullptr);
        fn(base + ".l2.b", nullptr, &t.heads[v].l2.b);
        fn(base + ".ln_gain", nullptr, &t.heads[v].ln_gain);
        fn(base + ".ln_bias", nullptr, &t.heads[v].ln_bias);
    }
    for (int k = 0; k < kNumPairs; ++k) {
        std::string base = "pred" + std::to_string(k);
        fn(base + ".l1.W", &t.predictors[k].l1.W, nullptr);
        fn(base + ".l1.b", nullptr, &t.predictors[k].l1.b);
        fn(base + ".l2.W", &t.predictors[k].l2.W, nullptr);
        fn(base + ".l2.b", nullptr, &t.predictors[k].l2.b);
    }
    for (int v = 0; v < kNumSlots; ++v) {
        std::string base = "dec" + std::to_string(v);
        fn(base + ".W", &t.decoders[v].W, nullptr);
        fn(base + ".b", nullptr, &t.decoders[v].b);
    }
}

}  // namespace

void for_each_tensor(EncoderParams& p,
                     const std::function<void(const std::string&, Mat*, Vec*)>& fn) {
    walk_tensors(p, fn);
}
void for_each_tensor(EncoderGrads& g,
                     const std::function<void(const std::string&, Mat*, Vec*)>& fn) {
    walk_tensors(g, fn);
}

void Minibatch::validate(const EncoderConfig& cfg) const {
    int n = size();
    if (n < 2) fail(ErrorClass::precondition, "minibatch needs N >= 2, got " + std::to_string(n));
    for (int v = 0; v < kNumSlots; ++v) {
        if (x[v].rows() != n)
            fail(ErrorClass::precondition, "minibatch views disagree on N");
        if (x[v].cols() != cfg.d_raw)
            fail(ErrorClass::dimension, "view width " + std::to_string(x[v].cols()) +
                                            " != d_raw " + std::to_string(cfg.d_raw));
        if (!all_finite(x[v])) fail(ErrorClass::validation, "non-finite raw embedding in batch");
    }
}

// --- head forward/backward -----------------------------------------------------

namespace {

struct HeadCache {
    Mat H1, A, mask, Ad, Z0, NH, Z;
    Vec mean, invstd;
};

HeadCache head_forward(const Mat& X, const ProjectionHead& h, const EncoderConfig& cfg,
                       bool train_mode, std::mt19937_64* rng) {
    HeadCache c;
    c.H1 = affine_rows(X, h.l1);
    c.A = c.H1.unaryExpr([](double x) { return gelu(x); });
    if (train_mode && cfg.dropout > 0) {
        if (!rng) fail(ErrorClass::precondition, "train-mode projection needs an rng");
        std::bernoulli_distribution keep(1.0 - cfg.dropout);
        c.mask = Mat(c.A.rows(), c.A.cols());
        double scale = 1.0 / (1.0 - cfg.dropout);
        for (Eigen::Index r = 0; r < c.mask.rows(); ++r)
            for (Eigen::Index col = 0; col < c.mask.cols(); ++col)
                c.mask(r, col) = keep(*rng) ? scale : 0.0;
        c.Ad = c.A.cwiseProduct(c.mask);
    } else {
        c.Ad = c.A;
    }
    c.Z0 = affine_rows(c.Ad, h.l2);
    int d = static_cast<int>(c.Z0.cols());
    c.mean = c.Z0.rowwise().mean();
    c.NH = Mat(c.Z0.rows(), d);
    c.invstd = Vec(c.Z0.rows());
    for (Eigen::Index r = 0; r < c.Z0.rows(); ++r) {
        Vec centered = c.Z0.row(r).transpose() - Vec::Constant(d, c.mean[r]);
        double var = centered.squaredNorm() / d;
        c.invstd[r] = 1.0 / std::sqrt(var + cfg.ln_eps);
        c.NH.row(r) = (centered * c.invstd[r]).transpose();
    }
    c.Z = Mat(c.NH.rows(), d);
    for (Eigen::Index r = 0; r < c.NH.rows(); ++r)
        c.Z.row(r) = (c.NH.row(r).transpose().cwiseProduct(h.ln_gain) + h.ln_bias).transpose();
    return c;
}

void head_backward(const Mat& X, const ProjectionHead& h, const HeadCache& c, const Mat& dZ,
                   ProjectionHead& g) {
    int d = static_cast<int>(dZ.cols());
    Mat dZ0(dZ.rows(), d);
    for (Eigen::Index r = 0; r < dZ.rows(); ++r) {
        Vec dz = dZ.row(r).transpose();
        g.ln_gain += dz.cwiseProduct(c.NH.row(r).transpose());
        g.ln_bias += dz;
        Vec dnh = dz.cwiseProduct(h.ln_gain);
        double m1 = dnh.mean();
        double m2 = dnh.cwiseProduct(c.NH.row(r).transpose()).mean();
        dZ0.row(r) =
            ((dnh.array() - m1 - c.NH.row(r).transpose().array() * m2) * c.invstd[r]).transpose();
    }
    g.l2.W += dZ0.transpose() * c.Ad;
    g.l2.b += dZ0.colwise().sum().transpose();
    Mat dAd = dZ0 * h.l2.W;
    Mat dA = c.mask.size() ? dAd.cwiseProduct(c.mask) : dAd;
    Mat dH1 = dA.cwiseProduct(c.H1.unaryExpr([](double x) { return gelu_grad(x); }));
    g.l1.W += dH1.transpose() * X;
    g.l1.b += dH1.colwise().sum().transpose();
}

}  // namespace

Vec project(const Vec& x, Slot view, const EncoderParams& params, bool train_mode,
            std::mt19937_64* rng) {
    if (x.size() != params.cfg.d_raw)
        fail(ErrorClass::dimension, "project: input width " + std::to_string(x.size()) +
                                        " != d_raw " + std::to_string(params.cfg.d_raw));
    std::mt19937_64 local = seeded_rng(params.cfg.seed, "project-dropout");
    Mat X = x.transpose();
    auto c = head_forward(X, params.heads[static_cast<int>(view)], params.cfg, train_mode,
                          rng ? rng : &local);
    Vec out = c.Z.row(0).transpose();
    const Vec& center = params.view_centers[static_cast<int>(view)];
    if (center.size() == out.size()) out -= center;
    return out;
}

Vec fuse(const std::array<Vec, kNumSlots>& per_view, const EncoderParams& params) {
    const auto& cfg = params.cfg;
    for (const auto& z : per_view)
        if (z.size() != cfg.dim)
            fail(ErrorClass::dimension, "fuse: missing or mis-sized view projection");
    return cfg.w_env * per_view[0] + cfg.w_mid * per_view[1] + cfg.w_desc * per_view[2];
}

std::array<Vec, kNumSlots> raw_views(const IntentUnit& unit, EmbeddingProvider& provider) {
    auto views = embed_views(unit, provider);
    std::array<Vec, kNumSlots> out;
    for (auto& [key, emb] : views) out[static_cast<int>(slot_of(key))] = std::move(emb.vector);
    return out;
}

SharedEmbedding encode_unit(const IntentUnit& unit, const EncoderParams& params,
                            EmbeddingProvider& provider) {
    auto raw = raw_views(unit, provider);
    SharedEmbedding s;
    for (int v = 0; v < kNumSlots; ++v)
        s.per_view[v] = project(raw[v], static_cast<Slot>(v), params, false);
    s.z = fuse(s.per_view, params);
    return s;
}

// --- losses ------------------------------------------------------------------

namespace detail {

double loss_con_views(const std::vector<Mat>& z_views, double tau) {
    size_t nv = z_views.size();
    if (nv < 2) fail(ErrorClass::precondition, "loss_con needs at least two views");
    Eigen::Index n = z_views[0].rows();
    if (n < 2) fail(ErrorClass::precondition, "loss_con needs N >= 2");
    std::vector<Mat> zhat(nv);
    for (size_t v = 0; v < nv; ++v) {
        zhat[v] = z_views[v];
        for (Eigen::Index r = 0; r < n; ++r) {
            double nrm = zhat[v].row(r).norm();
            if (nrm > 0) zhat[v].row(r) /= nrm;
        }
    }
    double total = 0;
    int pairs = 0;
    for (size_t p = 0; p < nv; ++p)
        for (size_t q = 0; q < nv; ++q) {
            if (p == q) continue;
            ++pairs;
            Mat S = zhat[p] * zhat[q].transpose() / tau;
            double pair_loss = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (Eigen::Index j = 0; j < n; ++j)
                    if (j != i) mx = std::max(mx, S(i, j));
                double lse = 0;
                for (Eigen::Index j = 0; j < n; ++j)
                    if (j != i) lse += std::exp(S(i, j) - mx);
                pair_loss += -S(i, i) + mx + std::log(lse);
            }
            total += pair_loss / static_cast<double>(n);
        }
    return total / pairs;
}

double loss_rec_views(const std::vector<Mat>& z_views, const std::vector<Mat>& x_views,
                      const std::vector<Affine>& decoders) {
    size_t nv = z_views.size();
    Eigen::Index n = z_views[0].rows();
    double total = 0;
    for (size_t v = 0; v < nv; ++v) {
        Mat R = affine_rows(z_views[v], decoders[v]) - x_views[v];
        total += R.squaredNorm();
    }
    return total / (static_cast<double>(nv) * static_cast<double>(n));
}

}  // namespace detail

LossBreakdown encoder_backward(const Minibatch& batch, const EncoderParams& params,
                               const LossWeights& w, EncoderGrads* grads, bool train_mode,
                               std::mt19937_64* rng) {
    const auto& cfg = params.cfg;
    batch.validate(cfg);
    int n = batch.size();
    double dn = n;

    std::array<HeadCache, kNumSlots> caches;
    for (int v = 0; v < kNumSlots; ++v)
        caches[v] = head_forward(batch.x[v], params.heads[v], cfg, train_mode, rng);

    std::array<Mat, kNumSlots> dZ;
    for (int v = 0; v < kNumSlots; ++v) dZ[v] = Mat::Zero(n, cfg.dim);

    LossBreakdown out;
    auto pairs = ordered_pairs();

    // Contrastive term: cosine similarity, denominator over j != i in view q.
    if (w.con != 0) {
        std::array<Mat, kNumSlots> zhat;
        std::array<Vec, kNumSlots> norms;
        std::array<Mat, kNumSlots> dZhat;
        for (int v = 0; v < kNumSlots; ++v) {
            zhat[v] = caches[v].Z;
            norms[v] = Vec(n);
            for (int r = 0; r < n; ++r) {
                double nrm = zhat[v].row(r).norm();
                norms[v][r] = nrm;
                if (nrm > 0) zhat[v].row(r) /= nrm;
            }
            dZhat[v] = Mat::Zero(n, cfg.dim);
        }
        double c = 1.0 / (kNumPairs * dn);
        for (int k = 0; k < kNumPairs; ++k) {
            int p = static_cast<int>(pairs[k].first), q = static_cast<int>(pairs[k].second);
            Mat S = zhat[p] * zhat[q].transpose() / cfg.tau_temp;
            if (!all_finite(S))
                fail(ErrorClass::validation,
                     "non-finite similarity in contrastive pair " + std::to_string(k));
            Mat dS = Mat::Zero(n, n);
            for (int i = 0; i < n; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < n; ++j)
                    if (j != i) mx = std::max(mx, S(i, j));
                double lse = 0;
                for (int j = 0; j < n; ++j)
                    if (j != i) lse += std::exp(S(i, j) - mx);
                out.con += (-S(i, i) + mx + std::log(lse)) / (kNumPairs * dn);
                dS(i, i) -= c;
                for (int j = 0; j < n; ++j)
                    if (j != i) dS(i, j) += c * std::exp(S(i, j) - mx) / lse;
            }
            if (grads) {
                dZhat[p] += (w.con / cfg.tau_temp) * (dS * zhat[q]);
                dZhat[q] += (w.con / cfg.tau_temp) * (dS.transpose() * zhat[p]);
            }
        }
        if (grads) {
            for (int v = 0; v < kNumSlots; ++v)
                for (int r = 0; r < n; ++r) {
                    if (norms[v][r] == 0) continue;
                    Vec zh = zhat[v].row(r).transpose();
                    Vec dzh = dZhat[v].row(r).transpose();
                    dZ[v].row(r) += ((dzh - zh * zh.dot(dzh)) / norms[v][r]).transpose();
                }
        }
    }

    // Dual-prediction term, 1/(2N) per ordered pair.
    if (w.pred != 0) {
        double coef = 1.0 / (2.0 * dn * kNumPairs);
        for (int k = 0; k < kNumPairs; ++k) {
            Slot p = pairs[k].first, q = pairs[k].second;
            int pi = static_cast<int>(p), qi = static_cast<int>(q);
            struct Term {
                int pred, src, dst;
            };
            // First term: G_{p->q}(z^p) vs z^q. Second term: the symmetric
            // reading G_{q->p}(z^q) vs z^p, or the as-printed variant.
            std::array<Term, 2> terms = {
                Term{k, pi, qi},
                cfg.strict_pred_as_printed ? Term{pair_index(q, p), pi, qi}
                                           : Term{pair_index(q, p), qi, pi}};
            for (const auto& t : terms) {
                const Predictor& F = params.predictors[t.pred];
                const Mat& Zsrc = caches[t.src].Z;
                const Mat& Zdst = caches[t.dst].Z;
                Mat H = affine_rows(Zsrc, F.l1);
                Mat Y = affine_rows(H, F.l2);
                Mat R = Y - Zdst;
                out.pred += coef * R.squaredNorm();
                if (grads) {
                    Mat dY = (2.0 * coef * w.pred) * R;
                    auto& gF = grads->predictors[t.pred];
                    gF.l2.W += dY.transpose() * H;
                    gF.l2.b += dY.colwise().sum().transpose();
                    Mat dH = dY * F.l2.W;
                    gF.l1.W += dH.transpose() * Zsrc;
                    gF.l1.b += dH.colwise().sum().transpose();
                    dZ[t.src] += dH * F.l1.W;
                    dZ[t.dst] -= dY;
                }
            }
        }
    }

    // Per-view linear reconstruction, mean over views and units.
    if (w.rec != 0) {
        double coef = 1.0 / (kNumSlots * dn);
        for (int v = 0; v < kNumSlots; ++v) {
            const Affine& dec = params.decoders[v];
            Mat R = affine_rows(caches[v].Z, dec) - batch.x[v];
            out.rec += coef * R.squaredNorm();
            if (grads) {
                Mat dR = (2.0 * coef * w.rec) * R;
                grads->decoders[v].W += dR.transpose() * caches[v].Z;
                grads->decoders[v].b += dR.colwise().sum().transpose();
                dZ[v] += dR * dec.W;
            }
        }
    }

    if (grads)
        for (int v = 0; v < kNumSlots; ++v)
            head_backward(batch.x[v], params.heads[v], caches[v], dZ[v], grads->heads[v]);

    out.total = w.con * out.con + w.pred * out.pred + w.rec * out.rec;
    return out;
}

double loss_con(const Minibatch& batch, const EncoderParams& params) {
    return encoder_backward(batch, params, {1, 0, 0}, nullptr).con;
}
double loss_pred(const Minibatch& batch, const EncoderParams& params) {
    return encoder_backward(batch, params, {0, 1, 0}, nullptr).pred;
}
double loss_rec(const Minibatch& batch, const EncoderParams& params) {
    return encoder_backward(batch, params, {0, 0, 1}, nullptr).rec;
}
double total_loss(const Minibatch& batch, const EncoderParams& params) {
    const auto& cfg = params.cfg;
    return encoder_backward(batch, params, {1, cfg.lambda_pred, cfg.lambda_rec}, nullptr).total;
}

Vec averaged_predictor(const EncoderParams& params, Slot p, Slot q, const Vec& z) {
    const Predictor& f = params.predictors[pair_index(p, q)];
    const Predictor& g = params.predictors[pair_index(q, p)];
    return 0.5 * (f.apply(z) + g.apply(z));
}

// --- training ----------------------------------------------------------------

TrainLog train(const std::vector<UnitViews>& corpus, EncoderParams& params, int epochs,
               int batch_size, bool verbose) {
    const auto& cfg = params.cfg;
    if (batch_size < 2) fail(ErrorClass::precondition, "batch_size must be >= 2");
    if (static_cast<int>(corpus.size()) < batch_size)
        fail(ErrorClass::precondition, "corpus smaller than batch_size");
    TrainLog log;
    LossWeights w{1.0, cfg.lambda_pred, cfg.lambda_rec};

    // Adam state (used only when cfg.optimizer == "adam").
    EncoderGrads m = zero_grads(params), v2 = zero_grads(params);
    long step = 0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<int> order(corpus.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        auto shuffle_rng = seeded_rng(cfg.seed ^ mix64(epoch + 1), "epoch-shuffle");
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_sum = 0;
        int batches = 0;
        for (size_t start = 0; start + 2 <= order.size(); start += batch_size) {
            size_t end = std::min(order.size(), start + batch_size);
            if (end - start < 2) break;
            int bn = static_cast<int>(end - start);
            Minibatch batch;
            for (int view = 0; view < kNumSlots; ++view) batch.x[view] = Mat(bn, cfg.d_raw);
            for (int i = 0; i < bn; ++i)
                for (int view = 0; view < kNumSlots; ++view)
                    batch.x[view].row(i) = corpus[order[start + i]][view].transpose();

            EncoderGrads grads = zero_grads(params);
            auto drop_rng =
                seeded_rng(cfg.seed ^ mix64((epoch + 1) * 1000003ULL + batches), "dropout");
            auto lb = encoder_backward(batch, params, w, &grads, true, &drop_rng);
            if (!std::isfinite(lb.total))
                fail(ErrorClass::divergence,
                     "non-finite loss at epoch " + std::to_string(epoch));
            epoch_sum += lb.total;
            ++batches;
            ++step;

            if (cfg.optimizer == "adam") {
                const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
                double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
                auto upd = [&](Mat* pm, Vec* pv, Mat* gm, Vec* gv, Mat* mm, Vec* mv, Mat* vm,
                               Vec* vv) {
                    if (pm) {
                        *mm = b1 * *mm + (1 - b1) * *gm;
                        *vm = b2 * *vm + (1 - b2) * gm->cwiseProduct(*gm);
                        *pm -= cfg.learning_rate *
                               ((mm->array() / bc1) /
                                ((vm->array() / bc2).sqrt() + eps))
                                   .matrix();
                    } else {
                        *mv = b1 * *mv + (1 - b1) * *gv;
                        *vv = b2 * *vv + (1 - b2) * gv->cwiseProduct(*gv);
                        *pv -= cfg.learning_rate *
                               ((mv->array() / bc1) /
                                ((vv->array() / bc2).sqrt() + eps))
                                   .matrix();
                    }
                };
                // Walk the four structures in lockstep via collected pointers.
                std::vector<std::tuple<Mat*, Vec*>> pp, gg, mm_, vv_;
                auto collect = [](std::vector<std::tuple<Mat*, Vec*>>& out) {
                    return [&out](const std::string&, Mat* m_, Vec* v_) {
                        out.emplace_back(m_, v_);
                    };
                };
                for_each_tensor(params, collect(pp));
                for_each_tensor(grads, collect(gg));
                for_each_tensor(m, collect(mm_));
                for_each_tensor(v2, collect(vv_));
                for (size_t i = 0; i < pp.size(); ++i)
                    upd(std::get<0>(pp[i]), std::get<1>(pp[i]), std::get<0>(gg[i]),
                        std::get<1>(gg[i]), std::get<0>(mm_[i]), std::get<1>(mm_[i]),
                        std::get<0>(vv_[i]), std::get<1>(vv_[i]));
            } else {
                std::vector<std::tuple<Mat*, Vec*>> pp, gg;
                auto collect = [](std::vector<std::tuple<Mat*, Vec*>>& out) {
                    return [&out](const std::string&, Mat* m_, Vec* v_) {
                        out.emplace_back(m_, v_);
                    };
                };
                for_each_tensor(params, collect(pp));
                for_each_tensor(grads, collect(gg));
                for (size_t i = 0; i < pp.size(); ++i) {
                    if (std::get<0>(pp[i]))
                        *std::get<0>(pp[i]) -= cfg.learning_rate * *std::get<0>(gg[i]);
                    else
                        *std::get<1>(pp[i]) -= cfg.learning_rate * *std::get<1>(gg[i]);
                }
            }
        }
        double mean_loss = batches ? epoch_sum / batches : 0.0;
        log.epoch_loss.push_back(mean_loss);
        if (verbose)
            std::fprintf(stderr, "epoch %d/%d loss %.6f\n", epoch + 1, epochs, mean_loss);
    }
    if (epochs > 0) {
        // Freeze per-view output centers over the training corpus.
        for (int v = 0; v < kNumSlots; ++v) params.view_centers[v] = Vec::Zero(cfg.dim);
        std::array<Vec, kNumSlots> mean;
        for (int v = 0; v < kNumSlots; ++v) mean[v] = Vec::Zero(cfg.dim);
        for (const auto& u : corpus)
            for (int v = 0; v < kNumSlots; ++v)
                mean[v] += project(u[v], static_cast<Slot>(v), params, false);
        for (int v = 0; v < kNumSlots; ++v)
            params.view_centers[v] = mean[v] / static_cast<double>(corpus.size());
    }
    return log;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) fail(ErrorClass::corrupt_file, "matrix field malformed");
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = j[r];
        if (static_cast<Eigen::Index>(row.size()) != m.cols())
            fail(ErrorClass::corrupt_file, "ragged matrix rows");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

}  // namespace

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
    json doc;
    doc["config"] = encoder_config_to_json(params.cfg);
    json centers = json::array();
    for (const auto& c : params.view_centers) centers.push_back(vec_to_json(c));
    doc["view_centers"] = std::move(centers);
    json tensors;
    auto& mutable_params = const_cast<EncoderParams&>(params);
    for_each_tensor(mutable_params, [&](const std::string& name, Mat* m, Vec* v) {
        tensors[name] = m ? mat_to_json(*m) : vec_to_json(*v);
    });
    doc["tensors"] = std::move(tensors);
    store_document(path, "tracemind_checkpoint", 1, std::move(doc));
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
    json doc = load_document(path, "tracemind_checkpoint", 1);
    EncoderParams p = init_encoder(encoder_config_from_json(doc.at("config")));
    if (doc.contains("view_centers"))
        for (int v = 0; v < kNumSlots; ++v)
            p.view_centers[v] = vec_from_json(doc.at("view_centers").at(v));
    const json& tensors = doc.at("tensors");
    for_each_tensor(p, [&](const std::string& name, Mat* m, Vec* v) {
        if (!tensors.contains(name))
            fail(ErrorClass::corrupt_file, "checkpoint missing tensor " + name);
        if (m)
            *m = mat_from_json(tensors.at(name));
        else
            *v = vec_from_json(tensors.at(name));
    });
    return p;
}

}  // namespace tracemind
