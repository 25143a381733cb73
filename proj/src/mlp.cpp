#include "weldwatch/mlp.hpp"

#include "weldwatch/error.hpp"
#include "weldwatch/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace weldwatch {
namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw DataError(std::string(what) + " contains non-finite values");
}

void check_input(const MlpModel& model, Eigen::Index cols) {
    if (cols != model.input_dim())
        throw ShapeError("input has " + std::to_string(cols) + " features, model expects " +
                         std::to_string(model.input_dim()));
}

Eigen::MatrixXd he_uniform(int rows, int cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / cols);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(rows, cols);
    // Row-major fill order keeps the draw sequence independent of storage order.
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) w(i, j) = dist(rng);
    return w;
}

// Column-wise stable softmax, in place.
void softmax_columns(Eigen::MatrixXd& z) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        col.array() -= col.maxCoeff();
        col = col.array().exp().matrix();
        col /= col.sum();
    }
}

// Activations with samples as columns. acts[0] is the input to layer `start`,
// acts[i] the input to layer start+i; pre[i] the pre-activation of layer start+i.
struct BatchPass {
    std::vector<Eigen::MatrixXd> acts;
    std::vector<Eigen::MatrixXd> pre;
    Eigen::MatrixXd probs;
};

BatchPass batch_forward(const MlpModel& model, Eigen::MatrixXd input_cols, int start) {
    BatchPass pass;
    pass.acts.push_back(std::move(input_cols));
    const int L = model.num_layers();
    for (int l = start; l < L; ++l) {
        Eigen::MatrixXd z = model.weights[l] * pass.acts.back();
        z.colwise() += model.biases[l];
        pass.pre.push_back(z);
        if (l + 1 < L) {
            pass.acts.push_back(z.cwiseMax(0.0));
        } else {
            softmax_columns(z);
            pass.probs = std::move(z);
        }
    }
    return pass;
}

// Activations feeding layer `stop` (stop <= L-1) for row-per-sample input.
Eigen::MatrixXd activations_before(const MlpModel& model, const Eigen::MatrixXd& rows, int stop) {
    Eigen::MatrixXd a = rows.transpose();
    for (int l = 0; l < stop; ++l) {
        Eigen::MatrixXd z = model.weights[l] * a;
        z.colwise() += model.biases[l];
        a = z.cwiseMax(0.0);
    }
    return a;
}

double cross_entropy(const BatchPass& pass, const std::vector<int>& labels,
                     const std::vector<Eigen::Index>& idx) {
    const Eigen::MatrixXd& logits = pass.pre.back();
    double total = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto col = logits.col(static_cast<Eigen::Index>(i));
        const double m = col.maxCoeff();
        const double lse = m + std::log((col.array() - m).exp().sum());
        total += lse - col(labels[idx[i]]);
    }
    return total / static_cast<double>(idx.size());
}

// Gradients of the mean cross-entropy for layers >= start.
Gradients backprop(const MlpModel& model, const Eigen::MatrixXd& input_cols,
                   const std::vector<int>& labels, const std::vector<Eigen::Index>& idx,
                   int start) {
    const int L = model.num_layers();
    const auto n = static_cast<Eigen::Index>(idx.size());
    BatchPass pass = batch_forward(model, input_cols, start);

    Gradients g;
    g.weights.resize(L);
    g.biases.resize(L);
    g.loss = cross_entropy(pass, labels, idx);

    Eigen::MatrixXd delta = pass.probs;
    for (Eigen::Index i = 0; i < n; ++i) delta(labels[idx[i]], i) -= 1.0;
    delta /= static_cast<double>(n);

    for (int l = L - 1; l >= start; --l) {
        const int local = l - start;
        g.weights[l] = delta * pass.acts[local].transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l > start) {
            Eigen::MatrixXd back = model.weights[l].transpose() * delta;
            delta = back.cwiseProduct((pass.pre[local - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    for (int l = 0; l < start; ++l) {
        g.weights[l] = Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols());
        g.biases[l] = Eigen::VectorXd::Zero(model.biases[l].size());
    }
    return g;
}

void check_labels(const MlpModel& model, const LabeledBatch& batch) {
    if (static_cast<Eigen::Index>(batch.labels.size()) != batch.features.rows())
        throw ShapeError("label count does not match sample count");
    for (int y : batch.labels)
        if (y < 0 || y >= model.num_classes())
            throw DataError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(model.num_classes()) + ")");
}

struct AdamMoments {
    Eigen::MatrixXd mw, vw;
    Eigen::VectorXd mb, vb;
};

}  // namespace

std::size_t MlpModel::num_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
    if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

MlpModel init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ConfigError("need at least input and output layer sizes");
    for (int s : layer_sizes)
        if (s < 1) throw ConfigError("layer sizes must be positive, got " + std::to_string(s));

    MlpModel model;
    model.layer_sizes = layer_sizes;
    model.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        model.weights.push_back(he_uniform(layer_sizes[l + 1], layer_sizes[l], rng));
        model.biases.push_back(Eigen::VectorXd::Zero(layer_sizes[l + 1]));
    }
    return model;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::MatrixXd z = logits;
    softmax_columns(z);
    return z.col(0);
}

ForwardTrace forward(const MlpModel& model, const Eigen::VectorXd& x) {
    check_input(model, x.size());
    require_finite(x, "input");
    ForwardTrace trace;
    Eigen::VectorXd h = x;
    const int L = model.num_layers();
    for (int l = 0; l < L; ++l) {
        Eigen::VectorXd z = model.weights[l] * h + model.biases[l];
        trace.pre_activations.push_back(z);
        if (l + 1 < L) {
            h = z.cwiseMax(0.0);
            trace.post_activations.push_back(h);
        } else {
            trace.logits = z;
            trace.probabilities = softmax(z);
            trace.post_activations.push_back(trace.probabilities);
        }
    }
    return trace;
}

Eigen::VectorXd embed(const MlpModel& model, const Eigen::VectorXd& x, int layer) {
    if (layer < 1 || layer > model.num_hidden())
        throw ConfigError("embedding layer " + std::to_string(layer) + " outside [1, " +
                          std::to_string(model.num_hidden()) + "]");
    check_input(model, x.size());
    require_finite(x, "input");
    Eigen::VectorXd h = x;
    for (int l = 0; l < layer; ++l) h = (model.weights[l] * h + model.biases[l]).cwiseMax(0.0);
    return h;
}

Eigen::MatrixXd embed_rows(const MlpModel& model, const Eigen::MatrixXd& x, int layer) {
    if (layer < 1 || layer > model.num_hidden())
        throw ConfigError("embedding layer " + std::to_string(layer) + " outside [1, " +
                          std::to_string(model.num_hidden()) + "]");
    check_input(model, x.cols());
    require_finite(x, "input");
    return activations_before(model, x, layer).transpose();
}

Eigen::MatrixXd predict_proba(const MlpModel& model, const Eigen::MatrixXd& x) {
    check_input(model, x.cols());
    require_finite(x, "input");
    const int last = model.num_layers() - 1;
    Eigen::MatrixXd z = model.weights[last] * activations_before(model, x, last);
    z.colwise() += model.biases[last];
    softmax_columns(z);
    return z.transpose();
}

std::vector<int> predict(const MlpModel& model, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd p = predict_proba(model, x);
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index best = 0;
        p.row(i).maxCoeff(&best);  // first maximum wins ties
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

Gradients gradients(const MlpModel& model, const LabeledBatch& batch) {
    if (batch.size() == 0) throw DataError("gradient batch is empty");
    check_input(model, batch.features.cols());
    require_finite(batch.features, "batch");
    check_labels(model, batch);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    return backprop(model, batch.features.transpose(), batch.labels, idx, 0);
}

double mean_loss(const MlpModel& model, const LabeledBatch& batch) {
    if (batch.size() == 0) throw DataError("loss batch is empty");
    check_input(model, batch.features.cols());
    check_labels(model, batch);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const BatchPass pass = batch_forward(model, batch.features.transpose(), 0);
    return cross_entropy(pass, batch.labels, idx);
}

TrainResult train(const MlpModel& model, const LabeledBatch& data, const TrainConfig& cfg,
                  const FreezeSpec& freeze) {
    cfg.validate();
    if (data.size() == 0) throw DataError("training set is empty");
    check_input(model, data.features.cols());
    require_finite(data.features, "training set");
    check_labels(model, data);
    const int L = model.num_layers();
    for (int l : freeze.frozen_layers)
        if (l < 0 || l >= L) throw ConfigError("frozen layer index " + std::to_string(l) + " out of range");
    int start = 0;
    while (start < L && freeze.is_frozen(start)) ++start;
    if (start == L) throw ConfigError("every layer is frozen; nothing to train");

    TrainResult result{model, {}};
    MlpModel& m = result.model;

    // Inputs to the first trainable layer never change, so compute them once.
    const Eigen::MatrixXd cached = activations_before(m, data.features, start);

    std::vector<AdamMoments> moments(static_cast<std::size_t>(L));
    for (int l = start; l < L; ++l) {
        auto& am = moments[static_cast<std::size_t>(l)];
        am.mw = Eigen::MatrixXd::Zero(m.weights[l].rows(), m.weights[l].cols());
        am.vw = am.mw;
        am.mb = Eigen::VectorXd::Zero(m.biases[l].size());
        am.vb = am.mb;
    }

    std::mt19937_64 rng(cfg.shuffle_seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    long long step = 0;
    const auto n = static_cast<std::size_t>(data.size());
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        for (std::size_t begin = 0; begin < n; begin += bs) {
            const std::size_t end = std::min(n, begin + bs);
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Eigen::MatrixXd input(cached.rows(), static_cast<Eigen::Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i)
                input.col(static_cast<Eigen::Index>(i)) = cached.col(idx[i]);

            const Gradients g = backprop(m, input, data.labels, idx, start);
            epoch_total += g.loss * static_cast<double>(idx.size());

            ++step;
            const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            for (int l = start; l < L; ++l) {
                if (freeze.is_frozen(l)) continue;
                auto& am = moments[static_cast<std::size_t>(l)];
                am.mw = cfg.adam_beta1 * am.mw + (1.0 - cfg.adam_beta1) * g.weights[l];
                am.vw = cfg.adam_beta2 * am.vw + (1.0 - cfg.adam_beta2) * g.weights[l].cwiseAbs2();
                am.mb = cfg.adam_beta1 * am.mb + (1.0 - cfg.adam_beta1) * g.biases[l];
                am.vb = cfg.adam_beta2 * am.vb + (1.0 - cfg.adam_beta2) * g.biases[l].cwiseAbs2();
                m.weights[l].array() -= cfg.learning_rate * (am.mw.array() / c1) /
                                        ((am.vw.array() / c2).sqrt() + cfg.adam_epsilon);
                m.biases[l].array() -= cfg.learning_rate * (am.mb.array() / c1) /
                                       ((am.vb.array() / c2).sqrt() + cfg.adam_epsilon);
            }
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(n));
    }
    return result;
}

MlpModel expand_output(const MlpModel& model, int k, std::uint64_t seed) {
    if (k < 0) throw ConfigError("cannot add a negative number of output classes");
    if (k == 0) return model;
    MlpModel out = model;
    const int last = out.num_layers() - 1;
    const int fan_in = out.layer_sizes[static_cast<std::size_t>(last)];
    const int old_rows = out.num_classes();
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd w(old_rows + k, fan_in);
    w.topRows(old_rows) = model.weights[last];
    w.bottomRows(k) = he_uniform(k, fan_in, rng);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(old_rows + k);
    b.head(old_rows) = model.biases[last];
    out.weights[last] = std::move(w);
    out.biases[last] = std::move(b);
    out.layer_sizes.back() += k;
    if (!out.class_labels.empty())
        for (int c = old_rows; c < old_rows + k; ++c) out.class_labels.push_back("class_" + std::to_string(c));
    return out;
}

std::string save_model(const MlpModel& model) {
    textio::Writer w("weldwatch-mlp 1");
    w.key("seed").value(static_cast<long long>(model.seed)).endl();
    w.key("activation").quoted("relu").endl();
    w.key("layers").value(static_cast<long long>(model.layer_sizes.size()));
    for (int s : model.layer_sizes) w.value(static_cast<long long>(s));
    w.endl();
    w.key("labels").value(static_cast<long long>(model.class_labels.size()));
    for (const auto& label : model.class_labels) w.quoted(label);
    w.endl();
    for (int l = 0; l < model.num_layers(); ++l) {
        w.key("layer").value(static_cast<long long>(l)).endl();
        w.matrix("weights", model.weights[l]);
        w.vector("bias", model.biases[l]);
    }
    return std::move(w).finish();
}

MlpModel load_model(const std::string& document) {
    textio::Reader r(document, "weldwatch-mlp 1");
    MlpModel model;
    r.expect("seed");
    model.seed = static_cast<std::uint64_t>(r.integer());
    r.expect("activation");
    if (r.quoted() != "relu") throw RestoreError("unsupported activation");
    r.expect("layers");
    const auto count = r.integer();
    if (count < 2) throw RestoreError("model needs at least two layer sizes");
    for (long long i = 0; i < count; ++i) {
        const auto s = r.integer();
        if (s < 1) throw RestoreError("non-positive layer size in model file");
        model.layer_sizes.push_back(static_cast<int>(s));
    }
    r.expect("labels");
    const auto nlabels = r.integer();
    for (long long i = 0; i < nlabels; ++i) model.class_labels.push_back(r.quoted());
    for (long long l = 0; l + 1 < count; ++l) {
        r.expect("layer");
        if (r.integer() != l) throw RestoreError("layer blocks out of order");
        model.weights.push_back(r.matrix("weights"));
        model.biases.push_back(r.vector("bias"));
        const auto rows = model.layer_sizes[static_cast<std::size_t>(l + 1)];
        const auto cols = model.layer_sizes[static_cast<std::size_t>(l)];
        if (model.weights.back().rows() != rows || model.weights.back().cols() != cols ||
            model.biases.back().size() != rows)
            throw RestoreError("layer " + std::to_string(l) + " shape disagrees with layer sizes");
        if (!model.weights.back().allFinite() || !model.biases.back().allFinite())
            throw RestoreError("non-finite parameter in layer " + std::to_string(l));
    }
    if (!model.class_labels.empty() &&
        static_cast<int>(model.class_labels.size()) != model.num_classes())
        throw RestoreError("label count disagrees with output size");
    if (!r.at_end()) throw RestoreError("trailing content after final layer");
    return model;
}

void save_model_file(const MlpModel& model, const std::string& path) {
    textio::write_file(path, save_model(model));
}

MlpModel load_model_file(const std::string& path) {
    return load_model(textio::read_file(path));
}

}  // namespace weldwatch
