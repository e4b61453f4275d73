#include "metapde/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace metapde {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string("tape: ") + op + ": shapes " + a.shape_str() + " and " +
                                b.shape_str() + " do not conform");
}

}  // namespace

void Tape::check_finite(const char* op, const Tensor& t) const {
    if (!t.all_finite()) {
        throw std::runtime_error(std::string("tape: ") + op + " produced a non-finite value");
    }
}

Var Tape::push(const char* op, Tensor value, bool requires_grad,
               std::function<void(Tape&, int)> backprop) {
    check_finite(op, value);
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Tensor& value) {
    return push("leaf", value, true, nullptr);
}

Var Tape::constant(const Tensor& value) {
    return push("constant", value, false, nullptr);
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = node(id);
    if (!n.grad_alloc) {
        n.grad = Tensor(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::accumulate_into(int id, const Tensor& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    Tensor& buf = grad_buffer(id);
    const std::size_t sz = buf.size();
    for (std::size_t i = 0; i < sz; ++i) buf[i] += g[i];
}

const Tensor& Tape::grad(Var v) {
    if (!backward_done_) {
        throw std::runtime_error("tape: grad() queried before backward()");
    }
    return grad_buffer(v.id);
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

Var Tape::elementwise(const char* op, Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const bool a_scalar = va.is_scalar();
    const bool b_scalar = vb.is_scalar();
    if (!a_scalar && !b_scalar && !va.same_shape(vb)) shape_error(op, va, vb);

    const Tensor& big = a_scalar ? vb : va;
    Tensor out(big.shape());
    const std::size_t n = out.size();
    const char c = op[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a_scalar ? va[0] : va[i];
        const double y = b_scalar ? vb[0] : vb[i];
        switch (c) {
            case '+': out[i] = x + y; break;
            case '-': out[i] = x - y; break;
            case '*': out[i] = x * y; break;
            default: out[i] = x / y; break;
        }
    }

    const bool rg = requires_grad(a) || requires_grad(b);
    const int ia = a.id, ib = b.id;
    auto back = [ia, ib, a_scalar, b_scalar, c](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& va2 = t.node(ia).value;
        const Tensor& vb2 = t.node(ib).value;
        const std::size_t n2 = g.size();
        if (t.node(ia).requires_grad) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < n2; ++i) {
                double d;
                switch (c) {
                    case '+':
                    case '-': d = g[i]; break;
                    case '*': d = g[i] * (b_scalar ? vb2[0] : vb2[i]); break;
                    default: d = g[i] / (b_scalar ? vb2[0] : vb2[i]); break;
                }
                ga[a_scalar ? 0 : i] += d;
            }
        }
        if (t.node(ib).requires_grad) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < n2; ++i) {
                const double x = a_scalar ? va2[0] : va2[i];
                const double y = b_scalar ? vb2[0] : vb2[i];
                double d;
                switch (c) {
                    case '+': d = g[i]; break;
                    case '-': d = -g[i]; break;
                    case '*': d = g[i] * x; break;
                    default: d = -g[i] * x / (y * y); break;
                }
                gb[b_scalar ? 0 : i] += d;
            }
        }
    };
    return push(op, std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::add(Var a, Var b) { return elementwise("+", a, b); }
Var Tape::sub(Var a, Var b) { return elementwise("-", a, b); }
Var Tape::mul(Var a, Var b) { return elementwise("*", a, b); }
Var Tape::div(Var a, Var b) { return elementwise("/", a, b); }

Var Tape::scale(Var a, double s) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * s;
    const bool rg = requires_grad(a);
    const int ia = a.id;
    auto back = [ia, s](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (!t.node(ia).requires_grad) return;
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    };
    return push("scale", std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) shape_error("matmul", va, vb);
    const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = va[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = vb.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    const bool rg = requires_grad(a) || requires_grad(b);
    const int ia = a.id, ib = b.id;
    auto back = [ia, ib, m, k, n](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.node(ia).requires_grad) {
            // dA = g * B^T
            const Tensor& vb2 = t.node(ib).value;
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double* grow = g.data() + i * n;
                    const double* brow = vb2.data() + p * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    ga[i * k + p] += acc;
                }
            }
        }
        if (t.node(ib).requires_grad) {
            // dB = A^T * g
            const Tensor& va2 = t.node(ia).value;
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = va2[i * k + p];
                    if (aip == 0.0) continue;
                    const double* grow = g.data() + i * n;
                    double* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
    };
    return push("matmul", std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::add_bias(Var m, Var bias) {
    const Tensor& vm = value(m);
    const Tensor& vb = value(bias);
    if (vm.rank() != 2 || vb.rank() != 1 || vb.size() != vm.cols()) shape_error("add_bias", vm, vb);
    const std::size_t r = vm.rows(), c = vm.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = vm[i * c + j] + vb[j];
    const bool rg = requires_grad(m) || requires_grad(bias);
    const int im = m.id, ib = bias.id;
    auto back = [im, ib, r, c](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        if (t.node(im).requires_grad) {
            Tensor& gm = t.grad_buffer(im);
            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.node(ib).requires_grad) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
    };
    return push("add_bias", std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

// ---------------------------------------------------------------------------
// structure ops
// ---------------------------------------------------------------------------

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("tape: concat_cols: no inputs");
    const std::size_t r = value(parts[0]).rows();
    std::size_t total = 0;
    bool rg = false;
    for (Var p : parts) {
        const Tensor& v = value(p);
        if (v.rank() != 2 || v.rows() != r) shape_error("concat_cols", value(parts[0]), v);
        total += v.cols();
        rg = rg || requires_grad(p);
    }
    Tensor out({r, total});
    std::size_t off = 0;
    std::vector<int> ids;
    std::vector<std::size_t> widths;
    for (Var p : parts) {
        const Tensor& v = value(p);
        const std::size_t c = v.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = v[i * c + j];
        ids.push_back(p.id);
        widths.push_back(c);
        off += c;
    }
    auto back = [ids, widths, r, total](Tape& t, int self) {
        const Tensor& g = t.node(self).grad;
        std::size_t off2 = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            const std::size_t c = widths[p];
            if (t.node(ids[p]).requires_grad) {
                Tensor& gp = t.grad_buffer(ids[p]);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off2 + j];
            }
            off2 += c;
        }
    };
    return push("concat_cols", std::move(out), rg,
                rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::slice_cols(Var m, std::size_t c0, std::size_t c1) {
    const Tensor& vm = value(m);
    if (vm.rank() != 2 || c0 >= c1 || c1 > vm.cols()) {
        throw std::invalid_argument("tape: slice_cols: range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") invalid for " + vm.shape_str());
    }
    const std::size_t r = vm.rows(), c = vm.cols(), w = c1 - c0;
    Tensor out({r, w});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = vm[i * c + c0 + j];
    const bool rg = requires_grad(m);
    const int im = m.id;
    auto back = [im, r, c, c0, w](Tape& t, int self) {
        if (!t.node(im).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        Tensor& gm = t.grad_buffer(im);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) gm[i * c + c0 + j] += g[i * w + j];
    };
    return push("slice_cols", std::move(out), rg,
                rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var Tape::sum(Var a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    const bool rg = requires_grad(a);
    const int ia = a.id;
    auto back = [ia](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double g = t.node(self).grad[0];
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return push("sum", Tensor::scalar(s), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::mean(Var a) {
    const Tensor& va = value(a);
    const double inv = 1.0 / static_cast<double>(va.size());
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    const bool rg = requires_grad(a);
    const int ia = a.id;
    auto back = [ia, inv](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const double g = t.node(self).grad[0] * inv;
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return push("mean", Tensor::scalar(s * inv), rg,
                rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Var Tape::tanh_op(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(va[i]);
    const bool rg = requires_grad(a);
    const int ia = a.id;
    auto back = [ia](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).value;
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return push("tanh", std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::sigmoid(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-va[i]));
    const bool rg = requires_grad(a);
    const int ia = a.id;
    auto back = [ia](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        const Tensor& y = t.node(self).value;
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    return push("sigmoid", std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::relu(Var a) {
    const Tensor& va = value(a);
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
    const bool rg = requires_grad(a);
    const int ia = a.id;
    auto back = [ia](Tape& t, int self) {
        if (!t.node(ia).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        const Tensor& x = t.node(ia).value;
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
    };
    return push("relu", std::move(out), rg, rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

// ---------------------------------------------------------------------------
// graph gather/scatter
// ---------------------------------------------------------------------------

Var Tape::gather_rows(Var m, const std::vector<std::size_t>& idx) {
    const Tensor& vm = value(m);
    if (vm.rank() != 2) throw std::invalid_argument("tape: gather_rows on " + vm.shape_str());
    const std::size_t c = vm.cols();
    for (std::size_t i : idx) {
        if (i >= vm.rows()) throw std::invalid_argument("tape: gather_rows: index out of range");
    }
    Tensor out({idx.size(), c});
    for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < c; ++j) out[e * c + j] = vm[idx[e] * c + j];
    const bool rg = requires_grad(m);
    const int im = m.id;
    auto back = [im, idx, c](Tape& t, int self) {
        if (!t.node(im).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        Tensor& gm = t.grad_buffer(im);
        for (std::size_t e = 0; e < idx.size(); ++e)
            for (std::size_t j = 0; j < c; ++j) gm[idx[e] * c + j] += g[e * c + j];
    };
    return push("gather_rows", std::move(out), rg,
                rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::scatter_sum_rows(Var m, const std::vector<std::size_t>& idx, std::size_t n_rows) {
    const Tensor& vm = value(m);
    if (vm.rank() != 2 || vm.rows() != idx.size()) {
        throw std::invalid_argument("tape: scatter_sum_rows: " + vm.shape_str() + " with " +
                                    std::to_string(idx.size()) + " indices");
    }
    const std::size_t c = vm.cols();
    for (std::size_t i : idx) {
        if (i >= n_rows) throw std::invalid_argument("tape: scatter_sum_rows: index out of range");
    }
    Tensor out({n_rows, c});
    for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < c; ++j) out[idx[e] * c + j] += vm[e * c + j];
    const bool rg = requires_grad(m);
    const int im = m.id;
    auto back = [im, idx, c](Tape& t, int self) {
        if (!t.node(im).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        Tensor& gm = t.grad_buffer(im);
        for (std::size_t e = 0; e < idx.size(); ++e)
            for (std::size_t j = 0; j < c; ++j) gm[e * c + j] += g[idx[e] * c + j];
    };
    return push("scatter_sum_rows", std::move(out), rg,
                rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

Var Tape::scatter_mean_rows(Var m, const std::vector<std::size_t>& idx, std::size_t n_rows) {
    const Tensor& vm = value(m);
    if (vm.rank() != 2 || vm.rows() != idx.size()) {
        throw std::invalid_argument("tape: scatter_mean_rows: " + vm.shape_str() + " with " +
                                    std::to_string(idx.size()) + " indices");
    }
    const std::size_t c = vm.cols();
    std::vector<double> inv_count(n_rows, 0.0);
    for (std::size_t i : idx) {
        if (i >= n_rows) throw std::invalid_argument("tape: scatter_mean_rows: index out of range");
        inv_count[i] += 1.0;
    }
    for (double& v : inv_count) v = v > 0.0 ? 1.0 / v : 0.0;
    Tensor out({n_rows, c});
    for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < c; ++j) out[idx[e] * c + j] += vm[e * c + j] * inv_count[idx[e]];
    const bool rg = requires_grad(m);
    const int im = m.id;
    auto back = [im, idx, c, inv_count](Tape& t, int self) {
        if (!t.node(im).requires_grad) return;
        const Tensor& g = t.node(self).grad;
        Tensor& gm = t.grad_buffer(im);
        for (std::size_t e = 0; e < idx.size(); ++e)
            for (std::size_t j = 0; j < c; ++j) gm[e * c + j] += g[idx[e] * c + j] * inv_count[idx[e]];
    };
    return push("scatter_mean_rows", std::move(out), rg,
                rg ? std::function<void(Tape&, int)>(back) : nullptr);
}

// ---------------------------------------------------------------------------
// reverse sweep
// ---------------------------------------------------------------------------

void Tape::backward(Var root, bool accumulate) {
    if (!root.valid() || static_cast<std::size_t>(root.id) >= nodes_.size()) {
        throw std::invalid_argument("tape: backward: invalid root");
    }
    const Tensor& rv = value(root);
    if (!rv.is_scalar()) {
        throw std::invalid_argument("tape: backward: root must be scalar, got " + rv.shape_str());
    }
    if (backward_done_ && !accumulate) {
        throw std::runtime_error(
            "tape: backward already ran; rebuild the forward pass or use accumulate mode");
    }
    // Interior buffers are per-sweep; only leaf/constant gradients persist in
    // accumulate mode. Re-firing interior nodes with stale gradients would
    // double-count shared subgraphs.
    for (Node& n : nodes_) {
        if (!accumulate || n.backprop) {
            n.grad = Tensor();
            n.grad_alloc = false;
        }
    }
    grad_buffer(root.id)[0] += 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = node(i);
        if (!n.grad_alloc || !n.requires_grad || !n.backprop) continue;
        n.backprop(*this, i);
    }
    backward_done_ = true;
}

}  // namespace metapde
