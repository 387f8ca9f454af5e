#include "gazevit/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "gazevit/errors.hpp"

namespace gazevit::ad {

const Mat& Var::value() const { return tape_->value_of(id_); }

Segments Segments::uniform(int count, int length) {
    Segments s;
    s.offsets.resize(static_cast<std::size_t>(count) + 1);
    for (int i = 0; i <= count; ++i) s.offsets[i] = i * length;
    return s;
}

Var Tape::constant(Mat value) {
    nodes_.push_back({std::move(value), {}, {}, nullptr, false});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
    nodes_.push_back({p.value, {}, {}, &p, grad_enabled_});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Mat value, std::span<const Var> inputs, Backward backward) {
    bool req = false;
    if (grad_enabled_)
        for (const Var& v : inputs) {
            if (v.tape_ != this) throw InvalidInput("operands recorded on different tapes");
            req = req || nodes_[v.id_].requires_grad;
        }
    else
        for (const Var& v : inputs)
            if (v.tape_ != this) throw InvalidInput("operands recorded on different tapes");
    nodes_.push_back({std::move(value), {}, req ? std::move(backward) : Backward{}, nullptr, req});
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_acc(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var root) {
    if (!grad_enabled_) throw InvalidInput("backward() on a tape recorded without gradients");
    if (root.rows() != 1 || root.cols() != 1) throw InvalidInput("backward() root must be 1x1");
    if (!nodes_[root.id_].requires_grad) return;
    grad_acc(root.id_)(0, 0) += 1.0;
    for (int id = root.id_; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) {
            if (n.param->grad.size() == 0) n.param->grad = Mat::Zero(n.value.rows(), n.value.cols());
            n.param->grad += n.grad;
        }
    }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidInput(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()));
}

void check_row(const Var& a, const Var& row, const char* op) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw InvalidInput(std::string(op) + ": expected 1x" + std::to_string(a.cols()) + " row");
}

template <typename F>
Var unary(Var a, Mat value, F&& local_grad) {
    // local_grad(x, y, g) returns dL/dx given input x, output y and upstream g.
    return a.tape()->push(std::move(value), {a}, [ia = a.id(), lg = std::forward<F>(local_grad)](Tape& t, int self) {
        if (!t.requires_grad(ia)) return;
        t.grad_acc(ia) += lg(t.value_of(ia), t.value_of(self), *t.grad_of(self));
    });
}

}  // namespace

Var matmul(Var a, Var b) {
    if (a.cols() != b.rows())
        throw InvalidInput("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                           std::to_string(b.rows()) + " differ");
    Mat out = a.value() * b.value();
    return a.tape()->push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia)) t.grad_acc(ia).noalias() += g * t.value_of(ib).transpose();
        if (t.requires_grad(ib)) t.grad_acc(ib).noalias() += t.value_of(ia).transpose() * g;
    });
}

Var matmul_nt(Var a, Var b) {
    if (a.cols() != b.cols()) throw InvalidInput("matmul_nt: column counts differ");
    Mat out = a.value() * b.value().transpose();
    return a.tape()->push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia)) t.grad_acc(ia).noalias() += g * t.value_of(ib);
        if (t.requires_grad(ib)) t.grad_acc(ib).noalias() += g.transpose() * t.value_of(ia);
    });
}

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Mat out = a.value() + b.value();
    return a.tape()->push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia)) t.grad_acc(ia) += g;
        if (t.requires_grad(ib)) t.grad_acc(ib) += g;
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Mat out = a.value() - b.value();
    return a.tape()->push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia)) t.grad_acc(ia) += g;
        if (t.requires_grad(ib)) t.grad_acc(ib) -= g;
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Mat out = a.value().cwiseProduct(b.value());
    return a.tape()->push(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia)) t.grad_acc(ia) += g.cwiseProduct(t.value_of(ib));
        if (t.requires_grad(ib)) t.grad_acc(ib) += g.cwiseProduct(t.value_of(ia));
    });
}

Var add_row(Var a, Var row) {
    check_row(a, row, "add_row");
    Mat out = a.value().rowwise() + row.value().row(0);
    return a.tape()->push(std::move(out), {a, row}, [ia = a.id(), ir = row.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia)) t.grad_acc(ia) += g;
        if (t.requires_grad(ir)) t.grad_acc(ir) += g.colwise().sum();
    });
}

Var mul_row(Var a, Var row) {
    check_row(a, row, "mul_row");
    Mat out = a.value().array().rowwise() * row.value().row(0).array();
    return a.tape()->push(std::move(out), {a, row}, [ia = a.id(), ir = row.id()](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        if (t.requires_grad(ia))
            t.grad_acc(ia).array() += g.array().rowwise() * t.value_of(ir).row(0).array();
        if (t.requires_grad(ir))
            t.grad_acc(ir) += g.cwiseProduct(t.value_of(ia)).colwise().sum();
    });
}

Var scale(Var a, double s) {
    return unary(a, a.value() * s, [s](const Mat&, const Mat&, const Mat& g) -> Mat { return g * s; });
}

Var add_scalar(Var a, double s) {
    Mat out = a.value().array() + s;
    return unary(a, std::move(out), [](const Mat&, const Mat&, const Mat& g) -> Mat { return g; });
}

Var transpose(Var a) {
    Mat out = a.value().transpose();
    return unary(a, std::move(out),
                 [](const Mat&, const Mat&, const Mat& g) -> Mat { return g.transpose(); });
}

Var relu(Var a) {
    Mat out = a.value().cwiseMax(0.0);
    return unary(a, std::move(out), [](const Mat& x, const Mat&, const Mat& g) -> Mat {
        return (x.array() > 0.0).select(g, 0.0);
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

Var gelu(Var a) {
    Mat out = a.value().unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
    });
    return unary(a, std::move(out), [](const Mat& x, const Mat&, const Mat& g) -> Mat {
        Mat d = x.unaryExpr([](double v) {
            double u = kGeluC * (v + 0.044715 * v * v * v);
            double th = std::tanh(u);
            double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        });
        return g.cwiseProduct(d);
    });
}

Var silu(Var a) {
    Mat out = a.value().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
    return unary(a, std::move(out), [](const Mat& x, const Mat&, const Mat& g) -> Mat {
        Mat d = x.unaryExpr([](double v) {
            double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
        return g.cwiseProduct(d);
    });
}

Var layer_norm(Var a, double eps) {
    const Mat& x = a.value();
    const Eigen::Index n = x.cols();
    Mat out(x.rows(), n);
    auto inv_std = std::make_shared<Eigen::VectorXd>(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mu = x.row(r).mean();
        double var = (x.row(r).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)(r) = is;
        out.row(r) = (x.row(r).array() - mu) * is;
    }
    return a.tape()->push(std::move(out), {a}, [ia = a.id(), inv_std](Tape& t, int self) {
        if (!t.requires_grad(ia)) return;
        const Mat& g = *t.grad_of(self);
        const Mat& xh = t.value_of(self);
        Mat& ga = t.grad_acc(ia);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            double gm = g.row(r).mean();
            double gx = g.row(r).dot(xh.row(r)) / static_cast<double>(g.cols());
            ga.row(r).array() += (*inv_std)(r) * (g.row(r).array() - gm - xh.row(r).array() * gx);
        }
    });
}

Var softmax_rows(Var a) {
    const Mat& x = a.value();
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double m = x.row(r).maxCoeff();
        out.row(r) = (x.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return unary(a, std::move(out), [](const Mat&, const Mat& y, const Mat& g) -> Mat {
        Mat d(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            double dot = g.row(r).dot(y.row(r));
            d.row(r) = y.row(r).array() * (g.row(r).array() - dot);
        }
        return d;
    });
}

Var slice_rows(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw InvalidInput("slice_rows: out of range");
    Mat out = a.value().middleRows(start, count);
    return a.tape()->push(std::move(out), {a}, [ia = a.id(), start, count](Tape& t, int self) {
        if (t.requires_grad(ia)) t.grad_acc(ia).middleRows(start, count) += *t.grad_of(self);
    });
}

Var slice_cols(Var a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw InvalidInput("slice_cols: out of range");
    Mat out = a.value().middleCols(start, count);
    return a.tape()->push(std::move(out), {a}, [ia = a.id(), start, count](Tape& t, int self) {
        if (t.requires_grad(ia)) t.grad_acc(ia).middleCols(start, count) += *t.grad_of(self);
    });
}

namespace {

Var concat_impl(std::span<const Var> parts, bool rows) {
    if (parts.empty()) throw InvalidInput("concat: no inputs");
    Tape* tape = parts[0].tape();
    Eigen::Index r = 0, c = 0;
    for (const Var& p : parts) {
        if (rows) {
            if (p.cols() != parts[0].cols()) throw InvalidInput("concat_rows: column counts differ");
            r += p.rows();
        } else {
            if (p.rows() != parts[0].rows()) throw InvalidInput("concat_cols: row counts differ");
            c += p.cols();
        }
    }
    if (rows) c = parts[0].cols();
    else r = parts[0].rows();
    Mat out(r, c);
    std::vector<int> ids;
    std::vector<Eigen::Index> starts;
    Eigen::Index off = 0;
    for (const Var& p : parts) {
        if (rows) out.middleRows(off, p.rows()) = p.value();
        else out.middleCols(off, p.cols()) = p.value();
        ids.push_back(p.id());
        starts.push_back(off);
        off += rows ? p.rows() : p.cols();
    }
    return tape->push(std::move(out), parts, [ids, starts, rows](Tape& t, int self) {
        const Mat& g = *t.grad_of(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!t.requires_grad(ids[i])) continue;
            const Mat& val = t.value_of(ids[i]);
            if (rows) t.grad_acc(ids[i]) += g.middleRows(starts[i], val.rows());
            else t.grad_acc(ids[i]) += g.middleCols(starts[i], val.cols());
        }
    });
}

}  // namespace

Var concat_rows(std::span<const Var> parts) { return concat_impl(parts, true); }
Var concat_cols(std::span<const Var> parts) { return concat_impl(parts, false); }

Var gather_rows(Var a, std::vector<int> index) {
    Mat out(static_cast<Eigen::Index>(index.size()), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.rows()) throw InvalidInput("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
    }
    return a.tape()->push(std::move(out), {a}, [ia = a.id(), index = std::move(index)](Tape& t, int self) {
        if (!t.requires_grad(ia)) return;
        const Mat& g = *t.grad_of(self);
        Mat& ga = t.grad_acc(ia);
        for (std::size_t i = 0; i < index.size(); ++i) ga.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    });
}

Var reshape(Var a, int rows, int cols) {
    if (static_cast<Eigen::Index>(rows) * cols != a.value().size()) throw InvalidInput("reshape: size mismatch");
    Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
    return a.tape()->push(std::move(out), {a}, [ia = a.id()](Tape& t, int self) {
        if (!t.requires_grad(ia)) return;
        Mat& ga = t.grad_acc(ia);
        const Mat& g = *t.grad_of(self);
        Eigen::Map<Mat>(ga.data(), g.rows(), g.cols()) += g;
    });
}

Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    return unary(a, std::move(out), [](const Mat& x, const Mat&, const Mat& g) -> Mat {
        return Mat::Constant(x.rows(), x.cols(), g(0, 0));
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    Mat out(1, 1);
    out(0, 0) = a.value().sum() / n;
    return unary(a, std::move(out), [n](const Mat& x, const Mat&, const Mat& g) -> Mat {
        return Mat::Constant(x.rows(), x.cols(), g(0, 0) / n);
    });
}

Var mse(Var a, const Mat& target) {
    if (a.rows() != target.rows() || a.cols() != target.cols()) throw InvalidInput("mse: shape mismatch");
    const double n = static_cast<double>(target.size());
    auto diff = std::make_shared<Mat>(a.value() - target);
    Mat out(1, 1);
    out(0, 0) = n > 0 ? diff->squaredNorm() / n : 0.0;
    return a.tape()->push(std::move(out), {a}, [ia = a.id(), diff, n](Tape& t, int self) {
        if (!t.requires_grad(ia) || n == 0) return;
        t.grad_acc(ia) += (*diff) * (2.0 * (*t.grad_of(self))(0, 0) / n);
    });
}

Var attention(Var q, Var k, Var v, int heads, const Segments& qs, const Segments& ks) {
    const Eigen::Index d = q.cols();
    if (k.cols() != d || v.cols() != d) throw InvalidInput("attention: q, k, v widths differ");
    if (heads <= 0 || d % heads != 0) throw InvalidInput("attention: width not divisible by heads");
    if (qs.count() != ks.count()) throw InvalidInput("attention: segment counts differ");
    if (qs.total() != q.rows() || ks.total() != k.rows() || k.rows() != v.rows())
        throw InvalidInput("attention: segments do not cover the inputs");
    const int dh = static_cast<int>(d / heads);
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    const Mat& Q = q.value();
    const Mat& K = k.value();
    const Mat& V = v.value();
    Mat out = Mat::Zero(Q.rows(), d);
    const bool keep = q.tape()->grad_enabled();
    auto probs = std::make_shared<std::vector<Mat>>();
    for (int s = 0; s < qs.count(); ++s) {
        const int nq = qs.length(s), nk = ks.length(s);
        if (nq == 0) continue;
        if (nk == 0) throw InvalidInput("attention: empty key segment");
        for (int h = 0; h < heads; ++h) {
            auto Qh = Q.block(qs.begin(s), h * dh, nq, dh);
            auto Kh = K.block(ks.begin(s), h * dh, nk, dh);
            auto Vh = V.block(ks.begin(s), h * dh, nk, dh);
            Mat S = (Qh * Kh.transpose()) * sc;
            for (Eigen::Index r = 0; r < S.rows(); ++r) {
                double m = S.row(r).maxCoeff();
                S.row(r) = (S.row(r).array() - m).exp();
                S.row(r) /= S.row(r).sum();
            }
            out.block(qs.begin(s), h * dh, nq, dh).noalias() = S * Vh;
            if (keep) probs->push_back(std::move(S));
        }
    }
    return q.tape()->push(std::move(out), {q, k, v},
        [iq = q.id(), ik = k.id(), iv = v.id(), heads, dh, sc, qs, ks, probs](Tape& t, int self) {
            const Mat& G = *t.grad_of(self);
            const Mat& Q = t.value_of(iq);
            const Mat& K = t.value_of(ik);
            const Mat& V = t.value_of(iv);
            Mat* gq = t.requires_grad(iq) ? &t.grad_acc(iq) : nullptr;
            Mat* gk = t.requires_grad(ik) ? &t.grad_acc(ik) : nullptr;
            Mat* gv = t.requires_grad(iv) ? &t.grad_acc(iv) : nullptr;
            std::size_t p = 0;
            for (int s = 0; s < qs.count(); ++s) {
                const int nq = qs.length(s), nk = ks.length(s);
                if (nq == 0) continue;
                for (int h = 0; h < heads; ++h) {
                    const Mat& P = (*probs)[p++];
                    auto Gh = G.block(qs.begin(s), h * dh, nq, dh);
                    auto Qh = Q.block(qs.begin(s), h * dh, nq, dh);
                    auto Kh = K.block(ks.begin(s), h * dh, nk, dh);
                    auto Vh = V.block(ks.begin(s), h * dh, nk, dh);
                    if (gv) gv->block(ks.begin(s), h * dh, nk, dh).noalias() += P.transpose() * Gh;
                    Mat dP = Gh * Vh.transpose();
                    Mat dS(nq, nk);
                    for (int r = 0; r < nq; ++r) {
                        double dot = dP.row(r).dot(P.row(r));
                        dS.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
                    }
                    dS *= sc;
                    if (gq) gq->block(qs.begin(s), h * dh, nq, dh).noalias() += dS * Kh;
                    if (gk) gk->block(ks.begin(s), h * dh, nk, dh).noalias() += dS.transpose() * Qh;
                }
            }
        });
}

Var im2col(Var x, int images, int h, int w, int kernel) {
    if (kernel % 2 == 0) throw InvalidInput("im2col: kernel must be odd");
    if (x.rows() != static_cast<Eigen::Index>(images) * h * w) throw InvalidInput("im2col: row count mismatch");
    const int c = static_cast<int>(x.cols());
    const int r = kernel / 2;
    const Mat& X = x.value();
    Mat out = Mat::Zero(X.rows(), static_cast<Eigen::Index>(kernel) * kernel * c);
    for (int img = 0; img < images; ++img)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(img) * h + y) * w + xx;
                for (int ky = 0; ky < kernel; ++ky) {
                    const int sy = y + ky - r;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int sx = xx + kx - r;
                        if (sx < 0 || sx >= w) continue;
                        out.block(row, (ky * kernel + kx) * c, 1, c) =
                            X.row((static_cast<Eigen::Index>(img) * h + sy) * w + sx);
                    }
                }
            }
    return x.tape()->push(std::move(out), {x}, [ix = x.id(), images, h, w, kernel, c, r](Tape& t, int self) {
        if (!t.requires_grad(ix)) return;
        const Mat& G = *t.grad_of(self);
        Mat& gx = t.grad_acc(ix);
        for (int img = 0; img < images; ++img)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const Eigen::Index row = (static_cast<Eigen::Index>(img) * h + y) * w + xx;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int sy = y + ky - r;
                        if (sy < 0 || sy >= h) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int sx = xx + kx - r;
                            if (sx < 0 || sx >= w) continue;
                            gx.row((static_cast<Eigen::Index>(img) * h + sy) * w + sx) +=
                                G.block(row, (ky * kernel + kx) * c, 1, c);
                        }
                    }
                }
    });
}

Var avg_pool2(Var x, int images, int h, int w) {
    if (h % 2 || w % 2) throw InvalidInput("avg_pool2: odd spatial size");
    if (x.rows() != static_cast<Eigen::Index>(images) * h * w) throw InvalidInput("avg_pool2: row count mismatch");
    const int ho = h / 2, wo = w / 2;
    const Mat& X = x.value();
    Mat out = Mat::Zero(static_cast<Eigen::Index>(images) * ho * wo, X.cols());
    auto src = [=](int img, int y, int xx) { return (static_cast<Eigen::Index>(img) * h + y) * w + xx; };
    for (int img = 0; img < images; ++img)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx) {
                auto o = out.row((static_cast<Eigen::Index>(img) * ho + y) * wo + xx);
                o = 0.25 * (X.row(src(img, 2 * y, 2 * xx)) + X.row(src(img, 2 * y, 2 * xx + 1)) +
                            X.row(src(img, 2 * y + 1, 2 * xx)) + X.row(src(img, 2 * y + 1, 2 * xx + 1)));
            }
    return x.tape()->push(std::move(out), {x}, [ix = x.id(), images, h, w, ho, wo, src](Tape& t, int self) {
        if (!t.requires_grad(ix)) return;
        const Mat& G = *t.grad_of(self);
        Mat& gx = t.grad_acc(ix);
        for (int img = 0; img < images; ++img)
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx) {
                    auto g = 0.25 * G.row((static_cast<Eigen::Index>(img) * ho + y) * wo + xx);
                    gx.row(src(img, 2 * y, 2 * xx)) += g;
                    gx.row(src(img, 2 * y, 2 * xx + 1)) += g;
                    gx.row(src(img, 2 * y + 1, 2 * xx)) += g;
                    gx.row(src(img, 2 * y + 1, 2 * xx + 1)) += g;
                }
    });
}

Var upsample2(Var x, int images, int h, int w) {
    if (x.rows() != static_cast<Eigen::Index>(images) * h * w) throw InvalidInput("upsample2: row count mismatch");
    const int ho = 2 * h, wo = 2 * w;
    std::vector<int> index(static_cast<std::size_t>(images) * ho * wo);
    for (int img = 0; img < images; ++img)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx)
                index[(static_cast<std::size_t>(img) * ho + y) * wo + xx] = (img * h + y / 2) * w + xx / 2;
    return gather_rows(x, std::move(index));
}

}  // namespace gazevit::ad
