#include "buildiff/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "buildiff/kernels.hpp"

namespace buildiff::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension in " + shape_str(shape_));
  if (numel(shape_) != data_.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("tensor: rows() on shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("tensor: cols() on shape " + shape_str(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::invalid_argument("tensor: item() on shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---- ParameterSet ------------------------------------------------------

Parameter& ParameterSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  index_[name] = params_.size();
  params_.push_back(Parameter{name, std::move(value), {}, false});
  return params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterSet::at(const std::string& name) {
  auto* p = find(name);
  if (!p) throw std::out_of_range("no parameter named '" + name + "'");
  return *p;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw std::out_of_range("no parameter named '" + name + "'");
  return *p;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.value.data().data(), p.value.size() * sizeof(double));
  }
  return h;
}

// ---- Var / Tape --------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Pullback pullback) {
  bool needs = false;
  for (const auto& v : inputs) {
    if (v.tape() != this) throw std::invalid_argument("operation mixes values from different tapes");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(pullback) : Pullback{}});
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_ref(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  for (auto& n : nodes_) n.grad.clear();
  for (auto& [p, id] : param_nodes_) {
    auto* param = const_cast<Parameter*>(p);
    param->grad.assign(param->value.size(), 0.0);
    param->has_grad = true;
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad_ref(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.pullback) n.pullback(*this, n.grad);
    if (n.param) n.param->grad = n.grad;
  }
}

// ---- operations --------------------------------------------------------

namespace {

void require(bool cond, const std::string& op, const std::string& detail) {
  if (!cond) throw std::invalid_argument(op + ": " + detail);
}

void require_same(const Var& a, const Var& b, const std::string& op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_matrix(const Var& a, const std::string& op) {
  require(a.shape().size() == 2, op, "expected a rank-2 tensor, got " + shape_str(a.shape()));
}

}  // namespace

Var matmul(Var a, Var b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul",
          "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul(a.value().data(), b.value().data(), out.data(), m, k, n);
  const Var inputs[] = {a, b};
  return a.tape()->record(std::move(out), inputs,
                          [a, b, m, k, n](Tape& t, std::span<const double> g) {
                            if (t.requires_grad(a.id()))
                              kernels::matmul_add_bt(g, t.value(b.id()).data(), t.grad_ref(a.id()),
                                                     m, k, n);
                            if (t.requires_grad(b.id()))
                              kernels::matmul_add_at(t.value(a.id()).data(), g, t.grad_ref(b.id()),
                                                     m, k, n);
                          });
}

namespace {

template <typename Fwd, typename Da, typename Db>
Var elementwise2(Var a, Var b, const char* name, Fwd fwd, Da da, Db db) {
  require_same(a, b, name);
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const Var inputs[] = {a, b};
  return a.tape()->record(Tensor(av.shape(), std::move(out)), inputs,
                          [a, b, da, db](Tape& t, std::span<const double> g) {
                            const auto& x = t.value(a.id());
                            const auto& y = t.value(b.id());
                            if (t.requires_grad(a.id())) {
                              auto& ga = t.grad_ref(a.id());
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(x[i], y[i]);
                            }
                            if (t.requires_grad(b.id())) {
                              auto& gb = t.grad_ref(b.id());
                              for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(x[i], y[i]);
                            }
                          });
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise2(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return elementwise2(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return elementwise2(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double s) {
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  const Var inputs[] = {a};
  return a.tape()->record(Tensor(av.shape(), std::move(out)), inputs,
                          [a, s](Tape& t, std::span<const double> g) {
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                          });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat", "no inputs");
  for (const auto& p : parts) require_matrix(p, "concat");
  const std::size_t rows = parts[0].shape()[0];
  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.shape()[0] == rows, "concat",
            "row counts differ: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    offsets.push_back(cols);
    cols += p.shape()[1];
  }
  Tensor out = Tensor::zeros({rows, cols});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    const auto c = v.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&v.data()[r * c], c, &out.data()[r * cols + offsets[k]]);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->record(
      std::move(out), inputs, [inputs, offsets, rows, cols](Tape& t, std::span<const double> g) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!t.requires_grad(inputs[k].id())) continue;
          auto& gk = t.grad_ref(inputs[k].id());
          const auto c = t.value(inputs[k].id()).cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) gk[r * c + j] += g[r * cols + offsets[k] + j];
        }
      });
}

Var leaky_relu(Var a, double slope) {
  require(slope > 0.0 && slope < 1.0, "leaky_relu", "slope must lie in (0,1)");
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : slope * av[i];
  const Var inputs[] = {a};
  return a.tape()->record(Tensor(av.shape(), std::move(out)), inputs,
                          [a, slope](Tape& t, std::span<const double> g) {
                            const auto& x = t.value(a.id());
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += x[i] > 0.0 ? g[i] : slope * g[i];
                          });
}

Var sigmoid(Var a) {
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  const Var inputs[] = {a};
  Tensor value(av.shape(), out);
  return a.tape()->record(std::move(value), inputs,
                          [a, s = std::move(out)](Tape& t, std::span<const double> g) {
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t i = 0; i < g.size(); ++i)
                              ga[i] += g[i] * s[i] * (1.0 - s[i]);
                          });
}

Var reduce_max_rows(Var a) {
  require_matrix(a, "reduce_max");
  const auto& av = a.value();
  const auto rows = av.rows(), cols = av.cols();
  std::vector<double> out(av.data().begin(), av.data().begin() + cols);
  std::vector<std::size_t> arg(cols, 0);
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (av[r * cols + c] > out[c]) {
        out[c] = av[r * cols + c];
        arg[c] = r;
      }
  const Var inputs[] = {a};
  return a.tape()->record(Tensor({1, cols}, std::move(out)), inputs,
                          [a, arg, cols](Tape& t, std::span<const double> g) {
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t c = 0; c < cols; ++c) ga[arg[c] * cols + c] += g[c];
                          });
}

Var sum(Var a) {
  const auto& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const Var inputs[] = {a};
  return a.tape()->record(Tensor::scalar(s), inputs, [a](Tape& t, std::span<const double> g) {
    auto& ga = t.grad_ref(a.id());
    for (auto& v : ga) v += g[0];
  });
}

Var reduce_mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mse(Var a, Var b) {
  require_same(a, b, "mse");
  const auto d = sub(a, b);
  return reduce_mean(mul(d, d));
}

Var gather_rows(Var a, std::span<const std::int64_t> index) {
  require_matrix(a, "gather_rows");
  const auto rows = a.shape()[0], cols = a.shape()[1];
  require(!index.empty(), "gather_rows", "empty index");
  std::vector<std::int64_t> idx(index.begin(), index.end());
  Tensor out = Tensor::zeros({idx.size(), cols});
  const auto& av = a.value();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    require(static_cast<std::size_t>(idx[i]) < rows, "gather_rows",
            "index " + std::to_string(idx[i]) + " out of range for " + shape_str(a.shape()));
    std::copy_n(&av.data()[static_cast<std::size_t>(idx[i]) * cols], cols, &out.data()[i * cols]);
  }
  const Var inputs[] = {a};
  return a.tape()->record(std::move(out), inputs,
                          [a, idx = std::move(idx), cols](Tape& t, std::span<const double> g) {
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                              if (idx[i] < 0) continue;
                              const auto r = static_cast<std::size_t>(idx[i]);
                              for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[i * cols + c];
                            }
                          });
}

Var broadcast_rows(Var a, std::size_t rows) {
  require(a.shape().size() == 2 && a.shape()[0] == 1, "broadcast_expand",
          "expected a (1 x n) tensor, got " + shape_str(a.shape()));
  require(rows > 0, "broadcast_expand", "zero rows requested");
  const auto cols = a.shape()[1];
  std::vector<double> out(rows * cols);
  const auto& av = a.value();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(av.data().data(), cols, &out[r * cols]);
  const Var inputs[] = {a};
  return a.tape()->record(Tensor({rows, cols}, std::move(out)), inputs,
                          [a, rows, cols](Tape& t, std::span<const double> g) {
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c) ga[c] += g[r * cols + c];
                          });
}

Var reshape(Var a, Shape shape) {
  require(numel(shape) == a.value().size(), "reshape",
          "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  const Var inputs[] = {a};
  return a.tape()->record(Tensor(std::move(shape), a.value().vec()), inputs,
                          [a](Tape& t, std::span<const double> g) {
                            auto& ga = t.grad_ref(a.id());
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          });
}

// ---- finite differences ------------------------------------------------

std::vector<std::vector<double>> finite_diff_grad(const std::function<double()>& f,
                                                  std::span<Parameter* const> params,
                                                  double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<std::vector<double>> grads;
  for (auto* p : params) {
    std::vector<double> g(p->value.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + step;
      const double fp = f();
      p->value[i] = orig - step;
      const double fm = f();
      p->value[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::domain_error("finite_diff_grad: non-finite objective at parameter '" + p->name +
                                "' element " + std::to_string(i));
      g[i] = (fp - fm) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace buildiff::ad
