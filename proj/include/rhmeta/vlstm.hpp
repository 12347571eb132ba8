// rhmeta vlstm: LSTM layer + fully connected layer with Monte Carlo dropout on the
// dense weight rows, BPTT gradients, Adam, mini-batch training and MC inference.
#pragma once

#include "rhmeta/common.hpp"

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>

namespace rhmeta::vlstm {

// =============================================================================
// Parameters
// =============================================================================

/// Gate blocks are stacked row-wise in the order forget, input, output, state:
/// rows [0,H) forget, [H,2H) input, [2H,3H) output, [3H,4H) state candidate.
struct LstmLayerParams {
    Matrix w_input;  ///< 4H x I
    Matrix w_hidden; ///< 4H x H
    Vector bias;     ///< 4H

    Eigen::Index hidden() const { return w_hidden.cols(); }
    Eigen::Index input_dim() const { return w_input.cols(); }
};

struct DenseLayerParams {
    Matrix weight; ///< H x O; output = weight^T y + bias
    Vector bias;   ///< O
};

struct Parameters {
    LstmLayerParams lstm;
    DenseLayerParams dense;

    static constexpr std::size_t kTensorCount = 5;
    static constexpr std::array<const char *, kTensorCount> kTensorNames = {
        "lstm.w_input", "lstm.w_hidden", "lstm.bias", "dense.weight", "dense.bias"};

    /// Zeros shaped like `like`.
    static Parameters zeros_like(const Parameters &like) {
        Parameters z;
        z.lstm.w_input = Matrix::Zero(like.lstm.w_input.rows(), like.lstm.w_input.cols());
        z.lstm.w_hidden = Matrix::Zero(like.lstm.w_hidden.rows(), like.lstm.w_hidden.cols());
        z.lstm.bias = Vector::Zero(like.lstm.bias.size());
        z.dense.weight = Matrix::Zero(like.dense.weight.rows(), like.dense.weight.cols());
        z.dense.bias = Vector::Zero(like.dense.bias.size());
        return z;
    }

    bool all_finite() const {
        return lstm.w_input.allFinite() && lstm.w_hidden.allFinite() && lstm.bias.allFinite() &&
               dense.weight.allFinite() && dense.bias.allFinite();
    }
};

/// Calls fn(name, tensor_0, tensor_1, ...) for each parameter tensor, zipping the
/// same tensor across all given Parameters objects.
template <typename Fn, typename... P> void zip_tensors(Fn &&fn, P &...ps) {
    fn(Parameters::kTensorNames[0], ps.lstm.w_input...);
    fn(Parameters::kTensorNames[1], ps.lstm.w_hidden...);
    fn(Parameters::kTensorNames[2], ps.lstm.bias...);
    fn(Parameters::kTensorNames[3], ps.dense.weight...);
    fn(Parameters::kTensorNames[4], ps.dense.bias...);
}

struct DropoutSpec {
    double rate = 0.0;           ///< P(row dropped) on the dense weight rows
    bool enabled = true;         ///< false forces all-ones masks
    bool inverted_scaling = true; ///< scale surviving rows by 1/(1-rate)

    bool active() const { return enabled && rate > 0.0; }
    double keep_scale() const { return (inverted_scaling && active()) ? 1.0 / (1.0 - rate) : 1.0; }
};

inline void validate(const DropoutSpec &d) {
    require(d.rate >= 0.0 && d.rate < 1.0, "dropout rate must lie in [0, 1)");
}

struct VLstmNetwork {
    Parameters params;
    DropoutSpec dropout;
    double sigma2 = 0.0; ///< observation-noise variance; 0 drops the weight-decay term

    Eigen::Index input_dim() const { return params.lstm.input_dim(); }
    Eigen::Index hidden() const { return params.lstm.hidden(); }
    Eigen::Index output_dim() const { return params.dense.weight.cols(); }
};

/// Weights uniform in +-1/sqrt(fan_in) (fan_in = I + H for the LSTM, H for the dense
/// layer); forget-gate bias 1, other biases 0.
inline VLstmNetwork init_network(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index output_dim,
                                 const DropoutSpec &dropout, std::uint64_t seed) {
    require(input_dim >= 1 && hidden >= 1 && output_dim >= 1, "network dimensions must be positive");
    validate(dropout);
    Rng rng(seed, Stream::Init);
    auto fill = [&](Matrix &m, Eigen::Index rows, Eigen::Index cols, double bound) {
        m.resize(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
    };
    VLstmNetwork net;
    net.dropout = dropout;
    const double b_lstm = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden));
    fill(net.params.lstm.w_input, 4 * hidden, input_dim, b_lstm);
    fill(net.params.lstm.w_hidden, 4 * hidden, hidden, b_lstm);
    net.params.lstm.bias = Vector::Zero(4 * hidden);
    net.params.lstm.bias.head(hidden).setOnes();
    fill(net.params.dense.weight, hidden, output_dim, 1.0 / std::sqrt(static_cast<double>(hidden)));
    net.params.dense.bias = Vector::Zero(output_dim);
    return net;
}

// =============================================================================
// Dropout masks
// =============================================================================

/// Bernoulli(1 - rate) keep indicators, one per dense weight row (hidden unit).
inline Vector sample_dropout_mask(const DropoutSpec &spec, Eigen::Index n_rows, Rng &rng) {
    validate(spec);
    Vector mask = Vector::Ones(n_rows);
    if (!spec.active()) return mask;
    for (Eigen::Index k = 0; k < n_rows; ++k) mask[k] = rng.uniform() < spec.rate ? 0.0 : 1.0;
    return mask;
}

// =============================================================================
// Forward pass
// =============================================================================

namespace detail {

inline Matrix sigmoid(const Matrix &z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

/// tanh through the vectorized exp: sign(z) (1 - 2 / (exp(2|z|) + 1)). Absolute error is
/// a few ulp; Eigen's own double tanh is scalar.
template <typename Derived> Matrix fast_tanh(const Eigen::MatrixBase<Derived> &z) {
    const auto a = z.array();
    const Eigen::ArrayXXd m = 1.0 - 2.0 / ((2.0 * a.abs()).exp() + 1.0);
    return (a < 0.0).select(-m, m).matrix();
}

} // namespace detail

/// Cached quantities of a batched forward pass. Columns of every H x (T*B) block are
/// ordered time-major: column t*B + b holds sequence b at step t.
struct BatchCache {
    Eigen::Index batch = 0, steps = 0;
    Matrix x;      ///< I x TB
    Matrix gates;  ///< 4H x TB, activated (sigmoid f,i,o; tanh candidate)
    Matrix cell;   ///< H x TB
    Matrix tanh_cell;
    Matrix hidden; ///< H x TB, LSTM output y
    Matrix masked; ///< H x TB, y scaled by each sequence's mask
    Matrix output; ///< O x TB
};

namespace detail {

inline Matrix stack_time_major(std::span<const Matrix> seqs) {
    const Eigen::Index B = static_cast<Eigen::Index>(seqs.size());
    const Eigen::Index rows = seqs.front().rows(), T = seqs.front().cols();
    Matrix out(rows, T * B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const Matrix &s = seqs[static_cast<std::size_t>(b)];
        if (s.rows() != rows || s.cols() != T) {
            std::ostringstream msg;
            msg << "sequence " << b << " is " << s.rows() << "x" << s.cols() << ", expected " << rows << "x" << T;
            throw Error(ErrorKind::InvalidArgument, msg.str());
        }
        for (Eigen::Index t = 0; t < T; ++t) out.col(t * B + b) = s.col(t);
    }
    return out;
}

inline std::vector<Matrix> unstack_time_major(const Matrix &m, Eigen::Index B) {
    const Eigen::Index T = m.cols() / B;
    std::vector<Matrix> out(static_cast<std::size_t>(B), Matrix(m.rows(), T));
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index b = 0; b < B; ++b) out[static_cast<std::size_t>(b)].col(t) = m.col(t * B + b);
    return out;
}

} // namespace detail

/// LSTM recurrence over a batch from zero initial state; fills x, gates, cell,
/// tanh_cell and hidden of `cache`.
inline void lstm_forward_batch(const LstmLayerParams &p, std::span<const Matrix> inputs, BatchCache &cache) {
    require(!inputs.empty(), "lstm_forward: empty batch");
    require(inputs.front().rows() == p.input_dim(), "lstm_forward: input dimension mismatch");
    const Eigen::Index H = p.hidden(), B = static_cast<Eigen::Index>(inputs.size());
    const Eigen::Index T = inputs.front().cols();
    cache.batch = B;
    cache.steps = T;
    cache.x = detail::stack_time_major(inputs);
    cache.gates.noalias() = p.w_input * cache.x;
    cache.gates.colwise() += p.bias;
    cache.cell.resize(H, T * B);
    cache.tanh_cell.resize(H, T * B);
    cache.hidden.resize(H, T * B);
    for (Eigen::Index t = 0; t < T; ++t) {
        auto g = cache.gates.middleCols(t * B, B);
        if (t > 0) g.noalias() += p.w_hidden * cache.hidden.middleCols((t - 1) * B, B);
        g.topRows(3 * H) = detail::sigmoid(g.topRows(3 * H));
        g.bottomRows(H) = detail::fast_tanh(g.bottomRows(H));
        auto s = cache.cell.middleCols(t * B, B);
        s = g.middleRows(H, H).cwiseProduct(g.bottomRows(H));
        if (t > 0) s += g.topRows(H).cwiseProduct(cache.cell.middleCols((t - 1) * B, B));
        cache.tanh_cell.middleCols(t * B, B) = detail::fast_tanh(s);
        cache.hidden.middleCols(t * B, B) = g.middleRows(2 * H, H).cwiseProduct(cache.tanh_cell.middleCols(t * B, B));
    }
}

/// Single-sequence LSTM output y (H x T).
inline Matrix lstm_forward(const LstmLayerParams &p, const Matrix &x) {
    BatchCache c;
    lstm_forward_batch(p, std::span<const Matrix>(&x, 1), c);
    return c.hidden;
}

/// (diag(mask * scale) W)^T y + bias for one sequence.
inline Matrix dense_forward_masked(const DenseLayerParams &p, const Vector &mask, double scale, const Matrix &y) {
    require(mask.size() == p.weight.rows() && y.rows() == p.weight.rows(), "dense_forward: hidden size mismatch");
    Matrix out = p.weight.transpose() * (y.array().colwise() * (mask.array() * scale)).matrix();
    out.colwise() += p.bias;
    return out;
}

/// Batched network forward with one mask per sequence (masks[b] has H entries).
inline void network_forward_batch(const VLstmNetwork &net, std::span<const Matrix> inputs,
                                  std::span<const Vector> masks, BatchCache &cache) {
    require(masks.size() == inputs.size(), "network_forward: one mask per sequence required");
    lstm_forward_batch(net.params.lstm, inputs, cache);
    const Eigen::Index B = cache.batch, T = cache.steps;
    const double scale = net.dropout.keep_scale();
    cache.masked.resize(cache.hidden.rows(), cache.hidden.cols());
    for (Eigen::Index b = 0; b < B; ++b) {
        const Vector &m = masks[static_cast<std::size_t>(b)];
        require(m.size() == net.hidden(), "network_forward: mask length must equal hidden size");
        const Vector ms = m * scale;
        for (Eigen::Index t = 0; t < T; ++t)
            cache.masked.col(t * B + b) = cache.hidden.col(t * B + b).cwiseProduct(ms);
    }
    cache.output.noalias() = net.params.dense.weight.transpose() * cache.masked;
    cache.output.colwise() += net.params.dense.bias;
}

inline Matrix network_forward(const VLstmNetwork &net, const Matrix &x, const Vector &mask) {
    BatchCache c;
    network_forward_batch(net, std::span<const Matrix>(&x, 1), std::span<const Vector>(&mask, 1), c);
    return c.output;
}

// =============================================================================
// Loss and gradients
// =============================================================================

/// Weight-decay term sum_j sigma2 (1 - p_j) / (2 n_t) ||w_j||^2 over the weight
/// matrices; the dense weight carries the dropout rate, LSTM weights carry none.
inline double regularizer(const VLstmNetwork &net, std::size_t n_train) {
    if (net.sigma2 == 0.0) return 0.0;
    require(n_train >= 1, "regularizer: n_train must be positive");
    const double c = net.sigma2 / (2.0 * static_cast<double>(n_train));
    const double p_dense = net.dropout.active() ? net.dropout.rate : 0.0;
    return c * (net.params.lstm.w_input.squaredNorm() + net.params.lstm.w_hidden.squaredNorm() +
                (1.0 - p_dense) * net.params.dense.weight.squaredNorm());
}

/// (1 / (2 B)) sum_i ||target_i - pred_i||^2
inline double data_loss(std::span<const Matrix> pred, std::span<const Matrix> target) {
    require(!pred.empty() && pred.size() == target.size(), "loss: batch size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred[i].rows() == target[i].rows() && pred[i].cols() == target[i].cols(), "loss: shape mismatch");
        sum += (target[i] - pred[i]).squaredNorm();
    }
    return sum / (2.0 * static_cast<double>(pred.size()));
}

inline double loss(const VLstmNetwork &net, std::span<const Matrix> pred, std::span<const Matrix> target,
                   std::size_t n_train) {
    return data_loss(pred, target) + regularizer(net, n_train);
}

/// Forward + backward over one batch with fixed masks. Returns the loss and writes the
/// exact gradient (full-sequence BPTT) into `grad`.
inline double loss_and_gradient(const VLstmNetwork &net, std::span<const Matrix> inputs,
                                std::span<const Matrix> targets, std::span<const Vector> masks,
                                std::size_t n_train, Parameters &grad) {
    require(targets.size() == inputs.size(), "backward: input/target batch mismatch");
    BatchCache c;
    network_forward_batch(net, inputs, masks, c);
    const Eigen::Index B = c.batch, T = c.steps, H = net.hidden();
    const Matrix target = detail::stack_time_major(targets);
    require(target.rows() == c.output.rows(), "backward: target dimension mismatch");

    Matrix d_out = (c.output - target) / static_cast<double>(B);
    double value = 0.5 * (c.output - target).squaredNorm() / static_cast<double>(B);
    value += regularizer(net, n_train);

    grad = Parameters::zeros_like(net.params);
    grad.dense.weight.noalias() = c.masked * d_out.transpose();
    grad.dense.bias = d_out.rowwise().sum();
    Matrix d_hidden = net.params.dense.weight * d_out; // gradient wrt masked outputs
    const double scale = net.dropout.keep_scale();
    for (Eigen::Index b = 0; b < B; ++b) {
        const Vector ms = masks[static_cast<std::size_t>(b)] * scale;
        for (Eigen::Index t = 0; t < T; ++t) d_hidden.col(t * B + b).array() *= ms.array();
    }

    const LstmLayerParams &p = net.params.lstm;
    Matrix d_gates(4 * H, T * B);
    Matrix d_cell_next = Matrix::Zero(H, B);
    Matrix d_rec = Matrix::Zero(H, B);
    Matrix dy(H, B), ds(H, B);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto g = c.gates.middleCols(t * B, B);
        const auto f = g.topRows(H).array(), i = g.middleRows(H, H).array(), o = g.middleRows(2 * H, H).array(),
                   cand = g.bottomRows(H).array();
        const auto tc = c.tanh_cell.middleCols(t * B, B).array();
        dy = d_hidden.middleCols(t * B, B) + d_rec;
        ds.array() = d_cell_next.array() + dy.array() * o * (1.0 - tc.square());
        auto dg = d_gates.middleCols(t * B, B);
        if (t > 0)
            dg.topRows(H).array() = ds.array() * c.cell.middleCols((t - 1) * B, B).array() * f * (1.0 - f);
        else
            dg.topRows(H).setZero();
        dg.middleRows(H, H).array() = ds.array() * cand * i * (1.0 - i);
        dg.middleRows(2 * H, H).array() = dy.array() * tc * o * (1.0 - o);
        dg.bottomRows(H).array() = ds.array() * i * (1.0 - cand.square());
        d_cell_next.array() = ds.array() * f;
        if (t > 0) d_rec.noalias() = p.w_hidden.transpose() * dg;
    }
    // recurrent weights: gate gradients at t against outputs at t-1, all steps at once
    if (T > 1)
        grad.lstm.w_hidden.noalias() = d_gates.rightCols((T - 1) * B) * c.hidden.leftCols((T - 1) * B).transpose();
    grad.lstm.w_input.noalias() = d_gates * c.x.transpose();
    grad.lstm.bias = d_gates.rowwise().sum();

    if (net.sigma2 != 0.0) {
        const double k = net.sigma2 / static_cast<double>(n_train);
        const double p_dense = net.dropout.active() ? net.dropout.rate : 0.0;
        grad.lstm.w_input += k * p.w_input;
        grad.lstm.w_hidden += k * p.w_hidden;
        grad.dense.weight += k * (1.0 - p_dense) * net.params.dense.weight;
    }
    return value;
}

// =============================================================================
// Adam
// =============================================================================

struct AdamState {
    Parameters m, v;
    std::uint64_t step = 0;
    double learning_rate = 0.001;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

inline AdamState make_adam(const Parameters &like, double learning_rate) {
    require(learning_rate > 0.0, "Adam learning rate must be positive");
    AdamState s;
    s.m = Parameters::zeros_like(like);
    s.v = Parameters::zeros_like(like);
    s.learning_rate = learning_rate;
    return s;
}

/// Bias-corrected Adam update of `params` in place.
inline void adam_step(Parameters &params, Parameters &grads, AdamState &state) {
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon, lr = state.learning_rate;
    zip_tensors(
        [&](const char *, auto &p, auto &g, auto &m, auto &v) {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
            p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        },
        params, grads, state.m, state.v);
}

// =============================================================================
// Training
// =============================================================================

struct TrainConfig {
    std::size_t max_epochs = 3000;
    std::size_t batch_size = 50;
    double learning_rate = 0.002;
    std::size_t patience = 0; ///< 0 = max(50, 10% of max_epochs)
    std::uint64_t seed = 0;
    std::size_t val_masks = 1; ///< mask draws averaged per validation sequence

    std::size_t effective_patience() const {
        return patience ? patience : std::max<std::size_t>(50, max_epochs / 10);
    }
};

struct LossHistory {
    std::vector<double> train;
    std::vector<double> val; ///< empty entries are NaN when there is no validation set
    std::size_t best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
    bool stopped_early = false;

    std::size_t epochs() const { return train.size(); }
};

enum class MaskPhase { Forward, Backward, Validation };

/// One record in the mask log: the mask that entered a computation for one sequence.
struct MaskEvent {
    std::size_t epoch;
    std::size_t batch;
    std::size_t sequence; ///< index into the training (or validation) set
    MaskPhase phase;
    const Vector *mask;
};

using MaskLogger = std::function<void(const MaskEvent &)>;

/// Iterations per epoch: ceil(n_train / batch_size).
inline std::size_t iterations_per_epoch(std::size_t n_train, std::size_t batch_size) {
    require(batch_size >= 1, "batch size must be positive");
    return (n_train + batch_size - 1) / batch_size;
}

/// Mini-batch Adam training. Each epoch shuffles the training set, draws one fresh
/// mask per sequence per visit, and evaluates the validation loss under fresh masks.
/// The network returned holds the parameters of the best-validation epoch.
inline LossHistory train(VLstmNetwork &net, std::span<const Matrix> train_x, std::span<const Matrix> train_y,
                         std::span<const Matrix> val_x, std::span<const Matrix> val_y, const TrainConfig &cfg,
                         const MaskLogger &log = {}) {
    require(!train_x.empty() && train_x.size() == train_y.size(), "train: empty or mismatched training set");
    require(val_x.size() == val_y.size(), "train: mismatched validation set");
    require(cfg.max_epochs >= 1, "train: max_epochs must be positive");
    require(cfg.batch_size >= 1, "train: batch size must be positive");
    require(cfg.val_masks >= 1, "train: val_masks must be positive");
    validate(net.dropout);
    const std::size_t n = train_x.size();
    const std::size_t patience = cfg.effective_patience();
    AdamState adam = make_adam(net.params, cfg.learning_rate);
    LossHistory hist;
    Parameters best = net.params, grad;
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(cfg.seed, Stream::Shuffle, epoch);
        shuffle_rng.shuffle(order);
        Rng mask_rng(cfg.seed, Stream::TrainMask, epoch);

        double epoch_sum = 0.0;
        const std::size_t n_batches = iterations_per_epoch(n, cfg.batch_size);
        for (std::size_t bi = 0; bi < n_batches; ++bi) {
            const std::size_t lo = bi * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            std::vector<Matrix> bx, by;
            std::vector<Vector> masks;
            for (std::size_t k = lo; k < hi; ++k) {
                bx.push_back(train_x[order[k]]);
                by.push_back(train_y[order[k]]);
                masks.push_back(sample_dropout_mask(net.dropout, net.hidden(), mask_rng));
                if (log) log({epoch, bi, order[k], MaskPhase::Forward, &masks.back()});
            }
            const double value = loss_and_gradient(net, bx, by, masks, n, grad);
            if (log)
                for (std::size_t k = lo; k < hi; ++k)
                    log({epoch, bi, order[k], MaskPhase::Backward, &masks[k - lo]});
            if (!std::isfinite(value) || !grad.all_finite()) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << bi;
                throw Error(ErrorKind::DivergenceFailure, msg.str());
            }
            epoch_sum += value * static_cast<double>(hi - lo);
            adam_step(net.params, grad, adam);
        }
        hist.train.push_back(epoch_sum / static_cast<double>(n));

        double monitored = hist.train.back();
        if (!val_x.empty()) {
            Rng val_rng(cfg.seed, Stream::ValMask, epoch);
            const double scale = net.dropout.keep_scale();
            std::vector<Matrix> hidden(val_x.size());
            for (std::size_t k = 0; k < val_x.size(); ++k) hidden[k] = lstm_forward(net.params.lstm, val_x[k]);
            double sum = 0.0;
            for (std::size_t r = 0; r < cfg.val_masks; ++r)
                for (std::size_t k = 0; k < val_x.size(); ++k) {
                    const Vector mask = sample_dropout_mask(net.dropout, net.hidden(), val_rng);
                    if (log) log({epoch, r, k, MaskPhase::Validation, &mask});
                    sum += (val_y[k] - dense_forward_masked(net.params.dense, mask, scale, hidden[k])).squaredNorm();
                }
            monitored = sum / (2.0 * static_cast<double>(val_x.size() * cfg.val_masks)) + regularizer(net, n);
            if (!std::isfinite(monitored)) {
                std::ostringstream msg;
                msg << "non-finite validation loss at epoch " << epoch;
                throw Error(ErrorKind::DivergenceFailure, msg.str());
            }
            hist.val.push_back(monitored);
        } else {
            hist.val.push_back(std::numeric_limits<double>::quiet_NaN());
        }

        if (monitored < hist.best_val) {
            hist.best_val = monitored;
            hist.best_epoch = epoch;
            best = net.params;
        } else if (epoch - hist.best_epoch >= patience) {
            hist.stopped_early = true;
            break;
        }
    }
    net.params = best;
    return hist;
}

// =============================================================================
// Inference
// =============================================================================

/// n_real outputs (O x T), each with an independent mask. The LSTM is evaluated once;
/// masks act only on the dense layer. Realization r draws from Stream::Predict index r.
inline std::vector<Matrix> mc_predict(const VLstmNetwork &net, const Matrix &x, std::size_t n_real,
                                      std::uint64_t seed) {
    require(n_real >= 1, "mc_predict: n_real must be at least 1");
    const Matrix y = lstm_forward(net.params.lstm, x);
    const double scale = net.dropout.keep_scale();
    std::vector<Matrix> out(n_real);
    for (std::size_t r = 0; r < n_real; ++r) {
        Rng rng(seed, Stream::Predict, r);
        out[r] = dense_forward_masked(net.params.dense, sample_dropout_mask(net.dropout, net.hidden(), rng), scale, y);
    }
    return out;
}

inline Matrix ensemble_mean(std::span<const Matrix> ens) {
    require(!ens.empty(), "ensemble_mean: empty ensemble");
    const Matrix &ref = ens.front();
    Matrix shift = Matrix::Zero(ref.rows(), ref.cols());
    for (const Matrix &e : ens) shift += e - ref;
    return ref + shift / static_cast<double>(ens.size());
}

/// Population std, shifted by the first member so identical members give exactly 0.
inline Matrix ensemble_std(std::span<const Matrix> ens) {
    require(!ens.empty(), "ensemble_std: empty ensemble");
    const Matrix &ref = ens.front();
    Matrix shift_mean = Matrix::Zero(ref.rows(), ref.cols());
    for (const Matrix &e : ens) shift_mean += e - ref;
    shift_mean /= static_cast<double>(ens.size());
    Matrix var = Matrix::Zero(ref.rows(), ref.cols());
    for (const Matrix &e : ens) var += (e - ref - shift_mean).cwiseAbs2();
    return (var / static_cast<double>(ens.size())).cwiseSqrt();
}

/// Pointwise nearest-rank quantiles at (1 - level)/2 and (1 + level)/2.
inline std::pair<Matrix, Matrix> confidence_interval(std::span<const Matrix> ens, double level) {
    require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
    require(ens.size() >= 2, "confidence_interval: ensemble needs at least 2 realizations");
    const std::size_t n = ens.size();
    auto rank = [n](double q) {
        const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
        return std::clamp<std::size_t>(r, 1, n) - 1;
    };
    const std::size_t lo = rank(0.5 * (1.0 - level)), hi = rank(0.5 * (1.0 + level));
    const Eigen::Index rows = ens.front().rows(), cols = ens.front().cols();
    Matrix lower(rows, cols), upper(rows, cols);
    std::vector<double> vals(n);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (std::size_t r = 0; r < n; ++r) vals[r] = ens[r](i, j);
            std::sort(vals.begin(), vals.end());
            lower(i, j) = vals[lo];
            upper(i, j) = vals[hi];
        }
    }
    return {lower, upper};
}

} // namespace rhmeta::vlstm
