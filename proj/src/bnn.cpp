#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hkq/bnn.hpp"
#include "hkq/rng.hpp"
#include "hkq/stats.hpp"
#include "json.hpp"

namespace hkq {
namespace {

constexpr std::size_t kOutWidth = 2 * BnnModel::kTargets;  // mean + log-variance heads

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -500.0, 500.0))); }

void check_batch(const BnnModel& model, const std::vector<FeatureVector>& features) {
  const std::size_t width = model.layers.front().fan_in();
  for (const FeatureVector& f : features) {
    require(f.schema_id == model.schema_id, errc::configuration,
            "feature schema '" + f.schema_id + "' does not match model schema '" +
                model.schema_id + "'");
    require(f.values.size() == width, errc::dimension, "feature width does not match model input");
  }
}

// One weight realization w = mean + softplus(rho) * xi plus the noise that
// produced it (needed for the rho gradients).
struct LayerSample {
  Matrix weight;
  std::vector<double> bias;
  Matrix xi_w;
  std::vector<double> xi_b;
};

LayerSample sample_layer(const VariationalDense& layer, Rng& rng) {
  LayerSample s;
  s.weight = Matrix(layer.fan_out(), layer.fan_in());
  s.xi_w = Matrix(layer.fan_out(), layer.fan_in());
  s.bias.resize(layer.fan_out());
  s.xi_b.resize(layer.fan_out());
  for (std::size_t i = 0; i < s.weight.size(); ++i) {
    s.xi_w.data[i] = rng.normal();
    s.weight.data[i] =
        layer.weight_mean.data[i] + softplus(layer.weight_rho.data[i]) * s.xi_w.data[i];
  }
  for (std::size_t i = 0; i < s.bias.size(); ++i) {
    s.xi_b[i] = rng.normal();
    s.bias[i] = layer.bias_mean[i] + softplus(layer.bias_rho[i]) * s.xi_b[i];
  }
  return s;
}

// z = h Wᵀ + b over a batch (rows of h).
void affine_forward(const Matrix& h, const LayerSample& s, Matrix& z) {
  const std::size_t batch = h.rows, in = h.cols, out = s.weight.rows;
  z = Matrix(batch, out);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* hb = &h.data[b * in];
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = &s.weight.data[o * in];
      double acc = s.bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += hb[i] * wo[i];
      z.at(b, o) = acc;
    }
  }
}

struct GradAccum {
  std::vector<Matrix> wm, wr;
  std::vector<std::vector<double>> bm, br;

  explicit GradAccum(const BnnModel& model) {
    wm.reserve(model.layers.size());
    for (const VariationalDense& l : model.layers) {
      wm.emplace_back(l.fan_out(), l.fan_in());
      wr.emplace_back(l.fan_out(), l.fan_in());
      bm.emplace_back(l.fan_out(), 0.0);
      br.emplace_back(l.fan_out(), 0.0);
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    for (std::size_t l = 0; l < wm.size(); ++l) {
      flat.insert(flat.end(), wm[l].data.begin(), wm[l].data.end());
      flat.insert(flat.end(), wr[l].data.begin(), wr[l].data.end());
      flat.insert(flat.end(), bm[l].begin(), bm[l].end());
      flat.insert(flat.end(), br[l].begin(), br[l].end());
    }
    return flat;
  }
};

void write_le_doubles(std::ostream& os, const std::vector<double>& values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

std::vector<double> read_le_doubles(std::istream& is, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
      std::ostringstream os;
      os << "weight block truncated: expected " << count << " values, got " << i;
      raise(errc::format, os.str());
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    std::memcpy(&values[i], &bits, sizeof(double));
  }
  return values;
}

nlohmann::ordered_json norm_to_json(const Normalization& n) {
  return nlohmann::ordered_json{{"mean", n.mean}, {"stddev", n.stddev}};
}

Normalization norm_from_json(const nlohmann::json& j) {
  Normalization n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("stddev").get<std::vector<double>>();
  return n;
}

}  // namespace

std::vector<std::size_t> BnnModel::widths() const {
  std::vector<std::size_t> w;
  w.reserve(layers.size() + 1);
  w.push_back(layers.front().fan_in());
  for (const VariationalDense& l : layers) w.push_back(l.fan_out());
  return w;
}

std::size_t BnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const VariationalDense& l : layers) n += l.parameter_count();
  return n;
}

std::vector<double> BnnModel::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const VariationalDense& l : layers) {
    flat.insert(flat.end(), l.weight_mean.data.begin(), l.weight_mean.data.end());
    flat.insert(flat.end(), l.weight_rho.data.begin(), l.weight_rho.data.end());
    flat.insert(flat.end(), l.bias_mean.begin(), l.bias_mean.end());
    flat.insert(flat.end(), l.bias_rho.begin(), l.bias_rho.end());
  }
  return flat;
}

void BnnModel::set_parameters(const std::vector<double>& flat) {
  require(flat.size() == parameter_count(), errc::dimension,
          "flat parameter vector has the wrong length");
  auto it = flat.begin();
  for (VariationalDense& l : layers) {
    std::copy_n(it, l.weight_mean.size(), l.weight_mean.data.begin());
    it += static_cast<std::ptrdiff_t>(l.weight_mean.size());
    std::copy_n(it, l.weight_rho.size(), l.weight_rho.data.begin());
    it += static_cast<std::ptrdiff_t>(l.weight_rho.size());
    std::copy_n(it, l.bias_mean.size(), l.bias_mean.begin());
    it += static_cast<std::ptrdiff_t>(l.bias_mean.size());
    std::copy_n(it, l.bias_rho.size(), l.bias_rho.begin());
    it += static_cast<std::ptrdiff_t>(l.bias_rho.size());
  }
}

void BnnModel::validate() const {
  require(!layers.empty(), errc::configuration, "model has no layers");
  require(!schema_id.empty(), errc::configuration, "model schema_id must be set");
  require(std::isfinite(prior_stddev) && prior_stddev > 0.0, errc::configuration,
          "prior stddev must be positive");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const VariationalDense& d = layers[l];
    require(d.fan_in() >= 1 && d.fan_out() >= 1, errc::configuration, "zero-width layer");
    require(d.weight_rho.rows == d.weight_mean.rows && d.weight_rho.cols == d.weight_mean.cols &&
                d.bias_mean.size() == d.fan_out() && d.bias_rho.size() == d.fan_out(),
            errc::dimension, "layer parameter shapes inconsistent");
    if (l > 0)
      require(d.fan_in() == layers[l - 1].fan_out(), errc::dimension, "layer widths do not chain");
  }
  require(layers.back().fan_out() == kOutWidth, errc::dimension,
          "output layer must emit mean and log-variance per target");
  require(input_norm.mean.size() == layers.front().fan_in() &&
              input_norm.stddev.size() == layers.front().fan_in(),
          errc::dimension, "input normalization length mismatch");
  require(target_norm.mean.size() == kTargets && target_norm.stddev.size() == kTargets,
          errc::dimension, "target normalization length mismatch");
  for (double s : input_norm.stddev)
    require(std::isfinite(s) && s > 0.0, errc::configuration, "input norm stddev must be > 0");
  for (double s : target_norm.stddev)
    require(std::isfinite(s) && s > 0.0, errc::configuration, "target norm stddev must be > 0");
  for (const VariationalDense& l : layers) {
    for (double v : l.weight_mean.data)
      require(std::isfinite(v), errc::numerical_accuracy, "non-finite model parameter");
    for (double v : l.weight_rho.data)
      require(std::isfinite(v), errc::numerical_accuracy, "non-finite model parameter");
    for (double v : l.bias_mean)
      require(std::isfinite(v), errc::numerical_accuracy, "non-finite model parameter");
    for (double v : l.bias_rho)
      require(std::isfinite(v), errc::numerical_accuracy, "non-finite model parameter");
  }
}

void TrainConfig::validate() const {
  require(steps >= 1, errc::configuration, "steps must be >= 1");
  require(batch_size >= 2, errc::configuration, "batch_size must be >= 2");
  require(mc_samples >= 1, errc::configuration, "mc_samples must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0.0, errc::configuration,
          "learning rate must be positive");
  require(std::isfinite(kl_weight) && kl_weight >= 0.0, errc::configuration,
          "kl_weight must be non-negative");
  require(log_every >= 1, errc::configuration, "log cadence must be >= 1");
}

void Dataset::validate() const {
  schema.validate();
  require(!features.empty(), errc::empty_set, "dataset is empty");
  require(features.size() == targets.size(), errc::dimension, "feature/target counts differ");
  for (const FeatureVector& f : features) {
    require(f.schema_id == schema.id, errc::configuration, "dataset mixes feature schemas");
    require(f.values.size() == schema.length(), errc::dimension, "feature length mismatch");
  }
  for (const auto& t : targets)
    for (double v : t)
      require(std::isfinite(v), errc::degenerate_input, "non-finite target value");
}

BnnModel init_model_dims(std::size_t input_width, const std::vector<std::size_t>& hidden_widths,
                         double prior_stddev, std::uint64_t seed, const std::string& schema_id) {
  require(input_width >= 1, errc::configuration, "input width must be >= 1");
  require(!hidden_widths.empty(), errc::configuration, "need at least one hidden layer");
  for (std::size_t w : hidden_widths) require(w >= 1, errc::configuration, "zero-width layer");
  require(std::isfinite(prior_stddev) && prior_stddev > 0.0, errc::configuration,
          "prior stddev must be positive");

  std::vector<std::size_t> widths;
  widths.push_back(input_width);
  widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
  widths.push_back(kOutWidth);

  // softplus(rho0) == 0.05 * prior_stddev exactly.
  const double rho0 = std::log(std::expm1(0.05 * prior_stddev));
  Rng rng(derive_seed(seed, 0, Stream::model_init));

  BnnModel model;
  model.schema_id = schema_id;
  model.prior_stddev = prior_stddev;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    VariationalDense layer;
    layer.weight_mean = Matrix(widths[l + 1], widths[l]);
    layer.weight_rho = Matrix(widths[l + 1], widths[l], rho0);
    layer.bias_mean.assign(widths[l + 1], 0.0);
    layer.bias_rho.assign(widths[l + 1], rho0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (double& w : layer.weight_mean.data) w = rng.normal() * scale;
    model.layers.push_back(std::move(layer));
  }
  model.input_norm = Normalization::identity(input_width);
  model.target_norm = Normalization::identity(BnnModel::kTargets);
  model.validate();
  return model;
}

BnnModel init_model(const FeatureSchema& schema, const std::vector<std::size_t>& hidden_widths,
                    double prior_stddev, std::uint64_t seed) {
  schema.validate();
  return init_model_dims(schema.length(), hidden_widths, prior_stddev, seed, schema.id);
}

double kl_divergence(const BnnModel& model) {
  const double p2 = model.prior_stddev * model.prior_stddev;
  double kl = 0.0;
  auto add = [&](const std::vector<double>& mean, const std::vector<double>& rho) {
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double s = softplus(rho[i]);
      kl += std::log(model.prior_stddev / s) + (s * s + mean[i] * mean[i]) / (2.0 * p2) - 0.5;
    }
  };
  for (const VariationalDense& l : model.layers) {
    add(l.weight_mean.data, l.weight_rho.data);
    add(l.bias_mean, l.bias_rho);
  }
  return kl;
}

ElboResult elbo_loss(const BnnModel& model, const std::vector<FeatureVector>& features,
                     const std::vector<std::array<double, BnnModel::kTargets>>& targets,
                     std::size_t mc_samples, double kl_weight, std::size_t dataset_size,
                     std::uint64_t seed) {
  require(!features.empty(), errc::insufficient_data, "batch is empty");
  require(features.size() == targets.size(), errc::dimension, "batch feature/target mismatch");
  require(mc_samples >= 1, errc::configuration, "mc_samples must be >= 1");
  require(dataset_size >= 1, errc::configuration, "dataset_size must be >= 1");
  require(std::isfinite(kl_weight) && kl_weight >= 0.0, errc::configuration,
          "kl_weight must be non-negative");
  check_batch(model, features);

  const std::size_t batch = features.size();
  const std::size_t in = model.layers.front().fan_in();
  const std::size_t nlayers = model.layers.size();

  Matrix x0(batch, in);
  Matrix yn(batch, BnnModel::kTargets);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < in; ++i)
      x0.at(b, i) = (features[b].values[i] - model.input_norm.mean[i]) / model.input_norm.stddev[i];
    for (std::size_t t = 0; t < BnnModel::kTargets; ++t)
      yn.at(b, t) = (targets[b][t] - model.target_norm.mean[t]) / model.target_norm.stddev[t];
  }

  GradAccum grad(model);
  Rng rng(derive_seed(seed, 0, Stream::elbo_noise));
  const double inv_mc = 1.0 / static_cast<double>(mc_samples);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double data_loss = 0.0;

  for (std::size_t mc = 0; mc < mc_samples; ++mc) {
    std::vector<LayerSample> samples;
    samples.reserve(nlayers);
    for (const VariationalDense& l : model.layers) samples.push_back(sample_layer(l, rng));

    // Forward; act[l] is the input to layer l, pre[l] its pre-activation.
    std::vector<Matrix> act(nlayers), pre(nlayers);
    act[0] = x0;
    for (std::size_t l = 0; l < nlayers; ++l) {
      affine_forward(act[l], samples[l], pre[l]);
      if (l + 1 < nlayers) {
        act[l + 1] = Matrix(pre[l].rows, pre[l].cols);
        for (std::size_t i = 0; i < pre[l].size(); ++i)
          act[l + 1].data[i] = softplus(pre[l].data[i]);
      }
    }

    // Heteroscedastic Gaussian NLL per row, summed over targets. The hard
    // log-variance clamp zeroes the gradient outside (-clamp, clamp).
    const Matrix& out = pre[nlayers - 1];
    Matrix dout(batch, kOutWidth);
    for (std::size_t b = 0; b < batch; ++b) {
      double row_nll = 0.0;
      for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
        const double mu = out.at(b, t);
        const double lv_raw = out.at(b, BnnModel::kTargets + t);
        const bool inside = lv_raw > -BnnModel::kLogVarClamp && lv_raw < BnnModel::kLogVarClamp;
        const double lv = std::clamp(lv_raw, -BnnModel::kLogVarClamp, BnnModel::kLogVarClamp);
        const double var = std::exp(lv);
        const double resid = yn.at(b, t) - mu;
        row_nll += 0.5 * (lv + resid * resid / var);
        dout.at(b, t) = -resid / var * inv_batch;
        dout.at(b, BnnModel::kTargets + t) =
            inside ? 0.5 * (1.0 - resid * resid / var) * inv_batch : 0.0;
      }
      if (!std::isfinite(row_nll)) {
        std::ostringstream os;
        os << "non-finite likelihood at batch index " << b;
        raise(errc::numerical_accuracy, os.str());
      }
      data_loss += row_nll * inv_batch * inv_mc;
    }

    // Backward: dh holds dL/d(pre-activation) of the current layer.
    Matrix dh = dout;
    for (std::size_t li = nlayers; li-- > 0;) {
      const VariationalDense& layer = model.layers[li];
      const LayerSample& s = samples[li];
      const Matrix& h = act[li];
      const std::size_t fan_in = h.cols, fan_out = dh.cols;

      for (std::size_t o = 0; o < fan_out; ++o) {
        double gb = 0.0;
        std::vector<double> gw(fan_in, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          const double dz = dh.at(b, o);
          gb += dz;
          const double* hb = &h.data[b * fan_in];
          for (std::size_t i = 0; i < fan_in; ++i) gw[i] += dz * hb[i];
        }
        double* awm = &grad.wm[li].data[o * fan_in];
        double* awr = &grad.wr[li].data[o * fan_in];
        const double* rho = &layer.weight_rho.data[o * fan_in];
        const double* xi = &s.xi_w.data[o * fan_in];
        for (std::size_t i = 0; i < fan_in; ++i) {
          awm[i] += gw[i] * inv_mc;
          awr[i] += gw[i] * xi[i] * sigmoid(rho[i]) * inv_mc;
        }
        grad.bm[li][o] += gb * inv_mc;
        grad.br[li][o] += gb * s.xi_b[o] * sigmoid(layer.bias_rho[o]) * inv_mc;
      }

      if (li > 0) {
        Matrix dprev(batch, fan_in);
        for (std::size_t b = 0; b < batch; ++b) {
          double* dp = &dprev.data[b * fan_in];
          for (std::size_t o = 0; o < fan_out; ++o) {
            const double dz = dh.at(b, o);
            const double* wo = &s.weight.data[o * fan_in];
            for (std::size_t i = 0; i < fan_in; ++i) dp[i] += dz * wo[i];
          }
          const double* zprev = &pre[li - 1].data[b * fan_in];
          for (std::size_t i = 0; i < fan_in; ++i) dp[i] *= sigmoid(zprev[i]);
        }
        dh = std::move(dprev);
      }
    }
  }

  // KL(q ‖ prior) term and its closed-form gradient, scaled by
  // kl_weight / dataset_size.
  const double kl_scale = kl_weight / static_cast<double>(dataset_size);
  const double p2 = model.prior_stddev * model.prior_stddev;
  double loss = data_loss + kl_scale * kl_divergence(model);
  for (std::size_t l = 0; l < nlayers; ++l) {
    const VariationalDense& layer = model.layers[l];
    for (std::size_t i = 0; i < layer.weight_mean.size(); ++i) {
      const double sp = softplus(layer.weight_rho.data[i]);
      grad.wm[l].data[i] += kl_scale * layer.weight_mean.data[i] / p2;
      grad.wr[l].data[i] += kl_scale * (sp / p2 - 1.0 / sp) * sigmoid(layer.weight_rho.data[i]);
    }
    for (std::size_t i = 0; i < layer.bias_mean.size(); ++i) {
      const double sp = softplus(layer.bias_rho[i]);
      grad.bm[l][i] += kl_scale * layer.bias_mean[i] / p2;
      grad.br[l][i] += kl_scale * (sp / p2 - 1.0 / sp) * sigmoid(layer.bias_rho[i]);
    }
  }

  if (!std::isfinite(loss)) raise(errc::numerical_accuracy, "non-finite ELBO loss");
  return {loss, grad.flatten()};
}

std::pair<BnnModel, std::vector<TrainLogEntry>> train(BnnModel model, const Dataset& dataset,
                                                      const TrainConfig& config) {
  config.validate();
  dataset.validate();
  model.validate();
  require(model.schema_id == dataset.schema.id, errc::configuration,
          "model schema does not match dataset schema");
  require(model.layers.front().fan_in() == dataset.schema.length(), errc::dimension,
          "model input width does not match schema length");
  require(dataset.features.size() >= 2, errc::insufficient_data,
          "need at least 2 training rows to normalize targets");

  const std::size_t n = dataset.features.size();
  const std::size_t in = dataset.schema.length();
  const std::vector<std::string> names = dataset.schema.feature_names();

  // Normalization statistics from the training set (population stddev).
  for (std::size_t i = 0; i < in; ++i) {
    std::vector<double> column(n);
    for (std::size_t r = 0; r < n; ++r) column[r] = dataset.features[r].values[i];
    const double sd = population_stddev(column);
    require(sd > 0.0, errc::degenerate_input, "feature '" + names[i] + "' has zero variance");
    model.input_norm.mean[i] = mean(column);
    model.input_norm.stddev[i] = sd;
  }
  for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
    std::vector<double> column(n);
    for (std::size_t r = 0; r < n; ++r) column[r] = dataset.targets[r][t];
    const double sd = population_stddev(column);
    if (sd <= 0.0) {
      std::ostringstream os;
      os << "target " << t << " has zero variance; cannot normalize";
      raise(errc::degenerate_input, os.str());
    }
    model.target_norm.mean[t] = mean(column);
    model.target_norm.stddev[t] = sd;
  }

  std::vector<double> params = model.parameters();
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

  Rng batch_rng(derive_seed(config.seed, 0, Stream::train_batch));
  std::vector<FeatureVector> bf(config.batch_size);
  std::vector<std::array<double, BnnModel::kTargets>> bt(config.batch_size);
  std::vector<TrainLogEntry> log;

  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t j = 0; j < config.batch_size; ++j) {
      const auto idx = std::min(n - 1, static_cast<std::size_t>(batch_rng.uniform() *
                                                                static_cast<double>(n)));
      bf[j] = dataset.features[idx];
      bt[j] = dataset.targets[idx];
    }

    ElboResult res;
    try {
      res = elbo_loss(model, bf, bt, config.mc_samples, config.kl_weight, n,
                      derive_seed(config.seed, step, Stream::elbo_noise));
    } catch (const Error& e) {
      if (e.code() != errc::numerical_accuracy) throw;
      std::ostringstream os;
      os << "training diverged at step " << step << ": " << e.message();
      raise(errc::training_failure, os.str());
    }
    if (!std::isfinite(res.loss)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step;
      raise(errc::training_failure, os.str());
    }

    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = res.gradient[i];
      m1[i] = kBeta1 * m1[i] + (1.0 - kBeta1) * g;
      m2[i] = kBeta2 * m2[i] + (1.0 - kBeta2) * g * g;
      params[i] -= config.learning_rate * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + kAdamEps);
    }
    model.set_parameters(params);

    if (step % config.log_every == 0 || step == config.steps)
      log.push_back({step, res.loss});
  }

  model.validate();
  return {std::move(model), std::move(log)};
}

std::pair<BnnModel, std::vector<TrainLogEntry>> train(const Dataset& dataset,
                                                      const TrainConfig& config) {
  dataset.validate();
  BnnModel model = init_model(dataset.schema, {64, 64}, 1.0,
                              derive_seed(config.seed, 0, Stream::model_init));
  return train(std::move(model), dataset, config);
}

InferenceDraws predict_mc(const BnnModel& model, const std::vector<FeatureVector>& features,
                          std::size_t s, std::uint64_t seed) {
  model.validate();
  require(s >= 1, errc::configuration, "draw count must be >= 1");
  require(!features.empty(), errc::empty_set, "no inputs to predict");
  check_batch(model, features);

  const std::size_t in = model.layers.front().fan_in();
  const std::size_t nlayers = model.layers.size();

  Matrix x0(features.size(), in);
  for (std::size_t b = 0; b < features.size(); ++b)
    for (std::size_t i = 0; i < in; ++i)
      x0.at(b, i) = (features[b].values[i] - model.input_norm.mean[i]) / model.input_norm.stddev[i];

  InferenceDraws draws;
  draws.inputs = features.size();
  draws.draws = s;
  draws.means.resize(features.size() * s * BnnModel::kTargets);
  draws.variances.resize(draws.means.size());

  for (std::size_t d = 0; d < s; ++d) {
    // One weight realization shared by every input; seed derived from the
    // draw index so results do not depend on input batching.
    Rng rng(derive_seed(seed, d, Stream::predict_draw));
    std::vector<LayerSample> samples;
    samples.reserve(nlayers);
    for (const VariationalDense& l : model.layers) samples.push_back(sample_layer(l, rng));

    Matrix h = x0, z;
    for (std::size_t l = 0; l < nlayers; ++l) {
      affine_forward(h, samples[l], z);
      if (l + 1 < nlayers) {
        h = Matrix(z.rows, z.cols);
        for (std::size_t i = 0; i < z.size(); ++i) h.data[i] = softplus(z.data[i]);
      }
    }

    for (std::size_t b = 0; b < features.size(); ++b) {
      for (std::size_t t = 0; t < BnnModel::kTargets; ++t) {
        const double ts = model.target_norm.stddev[t];
        const double lv = std::clamp(z.at(b, BnnModel::kTargets + t), -BnnModel::kLogVarClamp,
                                     BnnModel::kLogVarClamp);
        draws.means[draws.index(b, d, t)] = z.at(b, t) * ts + model.target_norm.mean[t];
        draws.variances[draws.index(b, d, t)] = std::exp(lv) * ts * ts;
      }
    }
  }
  return draws;
}

void save_model(const BnnModel& model, const std::string& path) {
  model.validate();
  nlohmann::ordered_json manifest;
  manifest["format"] = "hkq-bnn-v1";
  manifest["schema_id"] = model.schema_id;
  manifest["widths"] = model.widths();
  manifest["prior_stddev"] = model.prior_stddev;
  manifest["input_norm"] = norm_to_json(model.input_norm);
  manifest["target_norm"] = norm_to_json(model.target_norm);
  manifest["targets"] = {"log10_alpha", "k"};
  manifest["parameter_order"] =
      "per layer: weight_mean, weight_rho (row-major out x in), bias_mean, bias_rho";
  manifest["parameter_count"] = model.parameter_count();

  std::ofstream os(path, std::ios::binary);
  require(os.good(), errc::configuration, "cannot open model file for writing: " + path);
  os << manifest.dump() << '\n';
  write_le_doubles(os, model.parameters());
  os.flush();
  require(os.good(), errc::configuration, "failed writing model file: " + path);
}

BnnModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), errc::configuration, "cannot open model file: " + path);
  std::string line;
  std::getline(is, line);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format, std::string("bad model manifest: ") + e.what());
  }

  BnnModel model;
  std::size_t expected = 0;
  try {
    const auto format = manifest.at("format").get<std::string>();
    require(format == "hkq-bnn-v1", errc::format, "unsupported model format '" + format + "'");
    model.schema_id = manifest.at("schema_id").get<std::string>();
    model.prior_stddev = manifest.at("prior_stddev").get<double>();
    model.input_norm = norm_from_json(manifest.at("input_norm"));
    model.target_norm = norm_from_json(manifest.at("target_norm"));
    const auto widths = manifest.at("widths").get<std::vector<std::size_t>>();
    require(widths.size() >= 3 && widths.back() == kOutWidth, errc::format,
            "model widths field is invalid");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      require(widths[l] >= 1 && widths[l + 1] >= 1, errc::format, "model widths field is invalid");
      VariationalDense layer;
      layer.weight_mean = Matrix(widths[l + 1], widths[l]);
      layer.weight_rho = Matrix(widths[l + 1], widths[l]);
      layer.bias_mean.assign(widths[l + 1], 0.0);
      layer.bias_rho.assign(widths[l + 1], 0.0);
      model.layers.push_back(std::move(layer));
    }
    expected = manifest.at("parameter_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format, std::string("bad model manifest: ") + e.what());
  }
  require(expected == model.parameter_count(), errc::format,
          "parameter_count does not match widths");

  model.set_parameters(read_le_doubles(is, expected));
  char extra;
  if (is.read(&extra, 1))
    raise(errc::format, "trailing bytes after weight block");
  model.validate();
  return model;
}

}  // namespace hkq
