#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// float64 arrays.
//
// A Tape records every operation applied to Vars living on it. backward()
// walks the tape in reverse, overwriting (not accumulating) the gradients of
// every leaf that requires them, including external Parameters.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace buildiff::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double item() const;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A trainable tensor that outlives any single tape.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  bool has_grad = false;
};

// Named parameters in insertion order with stable addresses.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  // FNV-1a over names and raw bytes; detects any modification.
  std::uint64_t checksum() const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Empty until backward() has run through this node.
  std::span<const double> grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Pullback = std::function<void(Tape&, std::span<const double> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  // Binds a parameter; repeated calls with the same parameter return the same node.
  Var param(Parameter& p);

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  Var record(Tensor value, std::span<const Var> inputs, Pullback pullback);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::vector<double>& grad_ref(std::size_t id);
  std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Pullback pullback;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---- operations --------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Concatenation along the last axis of rank-2 tensors with equal row counts.
Var concat_cols(std::span<const Var> parts);
Var leaky_relu(Var a, double slope = 0.01);
Var sigmoid(Var a);
// (rows x cols) -> (1 x cols); gradient goes to the first maximal row.
Var reduce_max_rows(Var a);
Var reduce_mean(Var a);
Var sum(Var a);
Var mse(Var a, Var b);
// Row gather from a rank-2 tensor; index -1 yields a zero row.
Var gather_rows(Var a, std::span<const std::int64_t> index);
// (1 x cols) -> (rows x cols)
Var broadcast_rows(Var a, std::size_t rows);
Var reshape(Var a, Shape shape);

// Central-difference gradient of f with respect to every element of params.
// f must be deterministic; its value is read from the parameter tensors.
std::vector<std::vector<double>> finite_diff_grad(const std::function<double()>& f,
                                                  std::span<Parameter* const> params,
                                                  double step);

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace buildiff::ad
