#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gazevit/tensor.hpp"

// Matrix-valued reverse-mode differentiation over a linear tape.
//
// Nodes are appended in evaluation order, so the tape is already
// topologically sorted and backward() is a single reverse sweep. Batches are
// stacked along rows; ops that mix rows (attention) take explicit Segments.
namespace gazevit::ad {

struct Param {
    std::string name;
    Mat value;
    Mat grad;  // same shape as value once touched by backward()
};

class Tape;

class Var {
public:
    Var() = default;

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    int id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Row ranges of a stacked batch; segment i is [offsets[i], offsets[i+1]).
struct Segments {
    std::vector<int> offsets{0};

    static Segments uniform(int count, int length);
    int count() const { return static_cast<int>(offsets.size()) - 1; }
    int begin(int i) const { return offsets[i]; }
    int length(int i) const { return offsets[i + 1] - offsets[i]; }
    int total() const { return offsets.back(); }
};

class Tape {
public:
    using Backward = std::function<void(Tape&, int self)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat value);
    Var param(Param& p);

    // Seeds d(root)/d(root) = 1 for a 1x1 root, sweeps back and adds the
    // result into Param::grad of every parameter leaf.
    void backward(Var root);

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    // Op-author interface.
    Var push(Mat value, std::span<const Var> inputs, Backward backward);
    Var push(Mat value, std::initializer_list<Var> inputs, Backward backward) {
        return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                    std::move(backward));
    }
    const Mat& value_of(int id) const { return nodes_[id].value; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    const Mat* grad_of(int id) const {
        return nodes_[id].grad.size() ? &nodes_[id].grad : nullptr;
    }
    Mat& grad_acc(int id);

private:
    struct Node {
        Mat value;
        Mat grad;
        Backward backward;
        Param* param = nullptr;
        bool requires_grad = false;
    };

    bool grad_enabled_;
    std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast 1 x c over rows
Var mul_row(Var a, Var row);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var transpose(Var a);

Var relu(Var a);
Var gelu(Var a);  // tanh approximation
Var silu(Var a);

Var layer_norm(Var a, double eps = 1e-6);  // per row, no affine
Var softmax_rows(Var a);

Var slice_rows(Var a, int start, int count);
Var slice_cols(Var a, int start, int count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var a, std::vector<int> index);
Var reshape(Var a, int rows, int cols);

Var sum(Var a);
Var mean(Var a);
Var mse(Var a, const Mat& target);

/// Multi-head scaled dot-product attention. Query segment i attends only to
/// key/value segment i; q, k, v are already projected, head h uses columns
/// [h*dh, (h+1)*dh).
Var attention(Var q, Var k, Var v, int heads, const Segments& q_segments,
              const Segments& kv_segments);

// Feature maps are stacked as (images*h*w) x channels, row index
// img*h*w + y*w + x. im2col pads with zeros to keep h x w.
Var im2col(Var x, int images, int h, int w, int kernel);
Var avg_pool2(Var x, int images, int h, int w);
Var upsample2(Var x, int images, int h, int w);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace gazevit::ad
