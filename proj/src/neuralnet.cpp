#include <amiv/neuralnet.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace amiv {

namespace {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Activations of every layer plus the Softplus slopes needed by backprop.
template <typename Scalar>
struct Tape {
  std::vector<MatrixT<Scalar>> acts;
  std::vector<MatrixT<Scalar>> slopes;
};

/// log(1 + e) for e in (0, 1]. Eigen vectorizes log1p only for float; for
/// double, log(u) e / (u - 1) with u = 1 + e recovers the rounding lost in u.
template <typename Derived>
auto log1p_unit(const Eigen::ArrayBase<Derived>& e) {
  using Scalar = typename Derived::Scalar;
  if constexpr (std::is_same_v<Scalar, float>) {
    return e.log1p().eval();
  } else {
    const auto u = (Scalar(1) + e).eval();
    return (u == Scalar(1)).select(e, u.log() * e / (u - Scalar(1))).eval();
  }
}

template <typename Scalar>
MatrixT<Scalar> scale_inputs(const Mlp<Scalar>& net, const MatrixT<Scalar>& x) {
  if (x.rows() != net.input_width())
    throw std::invalid_argument("Mlp: input has " + std::to_string(x.rows()) + " features, network expects " +
                                std::to_string(net.input_width()));
  return ((x.colwise() - net.input_offset).array().colwise() * net.input_scale.array()).matrix();
}

template <typename Scalar>
void run_forward(const Mlp<Scalar>& net, const MatrixT<Scalar>& x, Tape<Scalar>& tape) {
  const std::size_t n_layers = net.layers.size();
  tape.acts.resize(n_layers + 1);
  tape.slopes.resize(n_layers);
  tape.acts[0] = scale_inputs(net, x);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = net.layers[l];
    MatrixT<Scalar> z(layer.weights.rows(), x.cols());
    z.noalias() = layer.weights * tape.acts[l];
    z.colwise() += layer.bias;
    if (layer.activation == Activation::Softplus) {
      const auto e = (-z.array().abs()).exp().eval();
      tape.slopes[l] = (z.array() >= Scalar(0)).select(Scalar(1), e) / (Scalar(1) + e);
      tape.acts[l + 1] = z.array().max(Scalar(0)) + log1p_unit(e);
    } else {
      tape.acts[l + 1] = std::move(z);
    }
  }
}

template <typename Scalar>
void check_loss_shape(const Mlp<Scalar>& net, const MatrixT<Scalar>& x, const MatrixT<Scalar>& y, Loss loss) {
  if (y.rows() != net.output_width() || y.cols() != x.cols())
    throw std::invalid_argument("Mlp: target shape does not match the network output");
  if (x.cols() == 0) throw std::invalid_argument("Mlp: empty batch");
  if (loss == Loss::DualMse && net.output_width() != 2)
    throw std::invalid_argument("Mlp: dual-head loss needs two outputs");
}

template <typename Scalar>
int significant_digits() {
  return std::numeric_limits<Scalar>::max_digits10;
}

template <typename Scalar>
Scalar parse_scalar(const std::string& token) {
  char* end = nullptr;
  Scalar v;
  if constexpr (std::is_same_v<Scalar, float>)
    v = std::strtof(token.c_str(), &end);
  else
    v = static_cast<Scalar>(std::strtod(token.c_str(), &end));
  if (token.empty() || end != token.c_str() + token.size()) throw FormatError("weights: bad number '" + token + "'");
  return v;
}

std::string scalar_tag(const float*) { return "float"; }
std::string scalar_tag(const double*) { return "double"; }

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string t;
    if (!(in_ >> t)) throw FormatError(std::string("weights: unexpected end of file reading ") + what);
    return t;
  }
  void expect(const std::string& keyword) {
    const std::string t = next(keyword.c_str());
    if (t != keyword) throw FormatError("weights: expected '" + keyword + "', found '" + t + "'");
  }
  long integer(const char* what) {
    const std::string t = next(what);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size()) throw FormatError(std::string("weights: bad ") + what + " '" + t + "'");
    return v;
  }
  template <typename Scalar>
  Scalar number(bool file_is_float) {
    const std::string t = next("value");
    if (file_is_float) return static_cast<Scalar>(parse_scalar<float>(t));
    return static_cast<Scalar>(parse_scalar<double>(t));
  }

 private:
  std::istream& in_;
};

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::Softplus ? "softplus" : "identity"; }

template <typename Scalar>
Mlp<Scalar> Mlp<Scalar>::init_glorot(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("init_glorot: need at least input and output widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("init_glorot: widths must be positive");
  Mlp net;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer<Scalar> layer;
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index j = 0; j < fan_in; ++j)
      for (Eigen::Index i = 0; i < fan_out; ++i) layer.weights(i, j) = static_cast<Scalar>(dist(rng));
    layer.bias = Vector::Zero(fan_out);
    layer.activation = l + 2 == widths.size() ? Activation::Identity : Activation::Softplus;
    net.layers.push_back(std::move(layer));
  }
  net.input_offset = Vector::Zero(widths.front());
  net.input_scale = Vector::Ones(widths.front());
  for (int i = 0; i < widths.front(); ++i) net.input_names.push_back("x" + std::to_string(i));
  for (int i = 0; i < widths.back(); ++i) net.output_names.push_back("y" + std::to_string(i));
  return net;
}

template <typename Scalar>
std::vector<int> Mlp<Scalar>::widths() const {
  std::vector<int> w{input_width()};
  for (const auto& l : layers) w.push_back(static_cast<int>(l.weights.rows()));
  return w;
}

template <typename Scalar>
std::size_t Mlp<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

template <typename Scalar>
void Mlp<Scalar>::set_input_scaling(const Vector& low, const Vector& high) {
  if (low.size() != input_width() || high.size() != input_width())
    throw std::invalid_argument("set_input_scaling: size mismatch");
  input_offset = low;
  input_scale.resize(low.size());
  for (Eigen::Index i = 0; i < low.size(); ++i) {
    const Scalar span = high[i] - low[i];
    input_scale[i] = span > Scalar(0) ? Scalar(1) / span : Scalar(1);
  }
}

template <typename Scalar>
typename Mlp<Scalar>::Vector Mlp<Scalar>::forward(const Vector& x) const {
  return forward_batch(x);
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix Mlp<Scalar>::forward_batch(const Matrix& x) const {
  Matrix a = scale_inputs(*this, x);
  for (const auto& layer : layers) {
    Matrix z(layer.weights.rows(), a.cols());
    z.noalias() = layer.weights * a;
    z.colwise() += layer.bias;
    if (layer.activation == Activation::Softplus)
      a = z.array().max(Scalar(0)) + log1p_unit((-z.array().abs()).exp().eval());
    else
      a = std::move(z);
  }
  return a;
}

template <typename Scalar>
Scalar loss_value(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& x,
                  const typename Mlp<Scalar>::Matrix& y, Loss loss) {
  check_loss_shape(net, x, y, loss);
  return (net.forward_batch(x) - y).squaredNorm() / static_cast<Scalar>(y.size());
}

template <typename Scalar>
Scalar grad(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& x, const typename Mlp<Scalar>::Matrix& y,
            Gradient<Scalar>& out, Loss loss) {
  check_loss_shape(net, x, y, loss);
  Tape<Scalar> tape;
  run_forward(net, x, tape);
  const std::size_t n_layers = net.layers.size();
  MatrixT<Scalar> delta = tape.acts.back() - y;
  const Scalar value = delta.squaredNorm() / static_cast<Scalar>(y.size());
  delta *= Scalar(2) / static_cast<Scalar>(y.size());

  out.weights.resize(n_layers);
  out.biases.resize(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    if (net.layers[l].activation == Activation::Softplus) delta.array() *= tape.slopes[l].array();
    out.weights[l].noalias() = delta * tape.acts[l].transpose();
    out.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      MatrixT<Scalar> back(net.layers[l].weights.cols(), delta.cols());
      back.noalias() = net.layers[l].weights.transpose() * delta;
      delta = std::move(back);
    }
  }
  return value;
}

template <typename Scalar>
AdamState<Scalar>::AdamState(const Mlp<Scalar>& net) {
  for (const auto& l : net.layers) {
    m.weights.push_back(MatrixT<Scalar>::Zero(l.weights.rows(), l.weights.cols()));
    m.biases.push_back(VectorT<Scalar>::Zero(l.bias.size()));
  }
  v = m;
}

template <typename Scalar>
void adam_step(Mlp<Scalar>& net, AdamState<Scalar>& state, const Gradient<Scalar>& g, Scalar lr) {
  if (g.weights.size() != net.layers.size() || state.m.weights.size() != net.layers.size())
    throw std::invalid_argument("adam_step: state does not match the network");
  ++state.step;
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar eps = static_cast<Scalar>(state.epsilon);
  const Scalar c1 = Scalar(1) / static_cast<Scalar>(1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) / static_cast<Scalar>(1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = b1 * m + (Scalar(1) - b1) * grad;
    v.array() = b2 * v.array() + (Scalar(1) - b2) * grad.array().square();
    param.array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].weights, state.m.weights[l], state.v.weights[l], g.weights[l]);
    update(net.layers[l].bias, state.m.biases[l], state.v.biases[l], g.biases[l]);
  }
}

HeadMetrics metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size() || y.size() == 0) throw std::invalid_argument("metrics: need equal, non-empty inputs");
  const double n = static_cast<double>(y.size());
  const Eigen::ArrayXd err = (y - yhat).array();
  HeadMetrics m;
  m.mse = err.square().sum() / n;
  m.mae = err.abs().sum() / n;
  if ((y.array() != 0.0).all()) m.mape = (err.abs() / y.array().abs()).sum() / n;
  const double ss_tot = (y.array() - y.mean()).square().sum();
  const double ss_res = err.square().sum();
  m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
  return m;
}

MetricsReport metrics(const Eigen::MatrixXd& y, const Eigen::MatrixXd& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols()) throw std::invalid_argument("metrics: shape mismatch");
  MetricsReport r;
  for (Eigen::Index h = 0; h < y.rows(); ++h)
    r.heads.push_back(metrics(Eigen::VectorXd(y.row(h).transpose()), Eigen::VectorXd(yhat.row(h).transpose())));
  return r;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
  if (halving_period < 1) throw std::invalid_argument("TrainConfig: halving_period must be at least 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
}

double TrainConfig::rate_at(int epoch) const { return learning_rate * std::ldexp(1.0, -(epoch / halving_period)); }

TrainingData TrainingData::from(const Dataset& d, const std::vector<std::string>& inputs,
                                const std::vector<std::string>& targets) {
  TrainingData t;
  t.x_train = d.select(inputs, Split::Train);
  t.y_train = d.select(targets, Split::Train);
  t.x_val = d.select(inputs, Split::Validation);
  t.y_val = d.select(targets, Split::Validation);
  t.x_test = d.select(inputs, Split::Test);
  t.y_test = d.select(targets, Split::Test);
  return t;
}

template <typename Scalar>
TrainReport train(Mlp<Scalar>& net, const TrainingData& data, const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = data.x_train.cols();
  if (n == 0) throw std::invalid_argument("train: empty training split");
  if (data.y_train.cols() != n) throw std::invalid_argument("train: inputs and targets differ in length");
  if (cfg.fit_input_scaling)
    net.set_input_scaling(data.x_train.rowwise().minCoeff().template cast<Scalar>(),
                          data.x_train.rowwise().maxCoeff().template cast<Scalar>());

  const MatrixT<Scalar> x = data.x_train.cast<Scalar>();
  const MatrixT<Scalar> y = data.y_train.cast<Scalar>();
  const MatrixT<Scalar> x_val = data.x_val.cast<Scalar>();
  const MatrixT<Scalar> y_val = data.y_val.cast<Scalar>();
  check_loss_shape(net, x, y, cfg.loss);

  AdamState<Scalar> state(net);
  Gradient<Scalar> g;
  std::mt19937_64 rng(cfg.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<Eigen::Index> batch;

  TrainReport report;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Scalar lr = static_cast<Scalar>(cfg.rate_at(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Eigen::Index batches = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(start + cfg.batch_size, n);
      batch.assign(order.begin() + start, order.begin() + stop);
      const MatrixT<Scalar> xb = x(Eigen::all, batch);
      const MatrixT<Scalar> yb = y(Eigen::all, batch);
      const Scalar loss = grad(net, xb, yb, g, cfg.loss);
      if (!std::isfinite(static_cast<double>(loss)))
        throw DivergenceDetected("train: non-finite loss at epoch " + std::to_string(epoch));
      adam_step(net, state, g, lr);
      loss_sum += static_cast<double>(loss);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = static_cast<double>(lr);
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.validation_loss = x_val.cols() > 0 ? static_cast<double>(loss_value(net, x_val, y_val, cfg.loss))
                                           : std::numeric_limits<double>::quiet_NaN();
    report.history.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
  }

  report.train = metrics(data.y_train, predict(net, data.x_train));
  if (data.x_val.cols() > 0) report.validation = metrics(data.y_val, predict(net, data.x_val));
  if (data.x_test.cols() > 0) report.test = metrics(data.y_test, predict(net, data.x_test));
  return report;
}

template <typename Scalar>
void save_weights(const Mlp<Scalar>& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const int digits = significant_digits<Scalar>();
  auto put = [&](Scalar v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(v));
    out << buf;
  };
  auto put_vector = [&](const VectorT<Scalar>& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      out << ' ';
      put(v[i]);
    }
    out << '\n';
  };
  out << "amiv-mlp " << kWeightFormatVersion << '\n';
  out << "scalar " << scalar_tag(static_cast<const Scalar*>(nullptr)) << '\n';
  out << "inputs " << net.input_names.size();
  for (const auto& s : net.input_names) out << ' ' << s;
  out << "\noutputs " << net.output_names.size();
  for (const auto& s : net.output_names) out << ' ' << s;
  out << "\ninput_offset";
  put_vector(net.input_offset);
  out << "input_scale";
  put_vector(net.input_scale);
  out << "layers " << net.layers.size() << '\n';
  for (const auto& l : net.layers) {
    out << "layer " << l.weights.cols() << ' ' << l.weights.rows() << ' ' << to_string(l.activation) << '\n';
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) {
        if (j) out << ' ';
        put(l.weights(i, j));
      }
      out << '\n';
    }
    out << "bias";
    put_vector(l.bias);
  }
  out << "end\n";
  if (!out) throw Error("failed writing '" + path + "'");
}

template <typename Scalar>
Mlp<Scalar> load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  TokenReader r(in);
  if (r.next("header") != "amiv-mlp") throw FormatError("weights: '" + path + "' is not a network weight file");
  const long version = r.integer("version");
  if (version != kWeightFormatVersion)
    throw FormatError("weights: unsupported format version " + std::to_string(version) + ", expected " +
                      std::to_string(kWeightFormatVersion));
  r.expect("scalar");
  const std::string tag = r.next("scalar type");
  if (tag != "float" && tag != "double") throw FormatError("weights: unknown scalar type '" + tag + "'");
  const bool is_float = tag == "float";

  Mlp<Scalar> net;
  auto names = [&](const char* key, std::vector<std::string>& dst) {
    r.expect(key);
    const long count = r.integer("name count");
    if (count < 1 || count > 1 << 20) throw FormatError(std::string("weights: bad ") + key + " count");
    for (long i = 0; i < count; ++i) dst.push_back(r.next("name"));
  };
  names("inputs", net.input_names);
  names("outputs", net.output_names);
  const auto n_in = static_cast<Eigen::Index>(net.input_names.size());
  auto vec = [&](const char* key, Eigen::Index size) {
    if (key) r.expect(key);
    VectorT<Scalar> v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = r.number<Scalar>(is_float);
    return v;
  };
  net.input_offset = vec("input_offset", n_in);
  net.input_scale = vec("input_scale", n_in);
  r.expect("layers");
  const long n_layers = r.integer("layer count");
  if (n_layers < 1 || n_layers > 1024) throw FormatError("weights: bad layer count");
  Eigen::Index prev = n_in;
  for (long l = 0; l < n_layers; ++l) {
    r.expect("layer");
    const long fan_in = r.integer("fan-in");
    const long fan_out = r.integer("fan-out");
    if (fan_in != prev || fan_out < 1 || fan_out > 1 << 20)
      throw FormatError("weights: layer " + std::to_string(l) + " has inconsistent shape");
    const std::string act = r.next("activation");
    Layer<Scalar> layer;
    if (act == "softplus")
      layer.activation = Activation::Softplus;
    else if (act == "identity")
      layer.activation = Activation::Identity;
    else
      throw FormatError("weights: unknown activation '" + act + "'");
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index i = 0; i < fan_out; ++i)
      for (Eigen::Index j = 0; j < fan_in; ++j) layer.weights(i, j) = r.number<Scalar>(is_float);
    layer.bias = vec("bias", fan_out);
    net.layers.push_back(std::move(layer));
    prev = fan_out;
  }
  if (prev != static_cast<Eigen::Index>(net.output_names.size()))
    throw FormatError("weights: output width does not match the output names");
  r.expect("end");
  return net;
}

#define AMIV_INSTANTIATE(S)                                                                                       \
  template class Mlp<S>;                                                                                          \
  template struct AdamState<S>;                                                                                   \
  template S loss_value<S>(const Mlp<S>&, const Mlp<S>::Matrix&, const Mlp<S>::Matrix&, Loss);                    \
  template S grad<S>(const Mlp<S>&, const Mlp<S>::Matrix&, const Mlp<S>::Matrix&, Gradient<S>&, Loss);           \
  template void adam_step<S>(Mlp<S>&, AdamState<S>&, const Gradient<S>&, S);                                      \
  template TrainReport train<S>(Mlp<S>&, const TrainingData&, const TrainConfig&);                                \
  template void save_weights<S>(const Mlp<S>&, const std::string&);                                               \
  template Mlp<S> load_weights<S>(const std::string&);

AMIV_INSTANTIATE(float)
AMIV_INSTANTIATE(double)

#undef AMIV_INSTANTIATE

}  // namespace amiv
