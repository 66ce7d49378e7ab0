#include "anchorlab/graph.hpp"

#include <cmath>
#include <cstring>

#include "anchorlab/kernels.hpp"

namespace anchorlab::diffcore {

namespace k = anchorlab::kernels;

Graph::Id Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
}

std::vector<double>& Graph::grad_buf(Id id) {
    Node& n = node(id);
    if (n.grad.size() != n.value.numel()) {
        n.grad.assign(n.value.numel(), 0.0);
    }
    return n.grad;
}

Graph::Id Graph::input(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.requires_grad = n.value.requires_grad;
    return push(std::move(n));
}

Graph::Id Graph::param(Tensor& p) {
    Node n;
    n.value = p;  // copy of the current values; grads flow to the external tensor
    n.requires_grad = true;
    n.bound = &p;
    n.backprop = [](Graph&, Node& self) {
        if (self.bound->grad.size() != self.bound->data.size()) {
            self.bound->grad.assign(self.bound->data.size(), 0.0);
        }
        k::axpy(1.0, self.grad.data(), self.bound->grad.data(), self.grad.size());
    };
    return push(std::move(n));
}

Graph::Id Graph::matmul(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.cols() != tb.rows()) {
        throw ShapeMismatchError("matmul: inner dimensions disagree");
    }
    const int m = ta.rows(), kk = ta.cols(), p = tb.cols();
    Node n;
    n.value = Tensor::zeros({m, p});
    k::gemm_nn(ta.data.data(), tb.data.data(), n.value.data.data(), m, kk, p);
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.backprop = [a, b, m, kk, p](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            std::vector<double> bt(static_cast<size_t>(kk) * p);
            k::transpose(g.value(b).data.data(), bt.data(), kk, p);
            k::gemm_nn(self.grad.data(), bt.data(), g.grad_buf(a).data(), m, p, kk, true);
        }
        if (g.node(b).requires_grad) {
            std::vector<double> at(static_cast<size_t>(m) * kk);
            k::transpose(g.value(a).data.data(), at.data(), m, kk);
            k::gemm_nn(at.data(), self.grad.data(), g.grad_buf(b).data(), kk, m, p, true);
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::add(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape != tb.shape) {
        throw ShapeMismatchError("add: shapes differ");
    }
    Node n;
    n.value = Tensor::zeros(ta.shape);
    k::add(ta.data.data(), tb.data.data(), n.value.data.data(), ta.numel());
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.backprop = [a, b](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            k::axpy(1.0, self.grad.data(), g.grad_buf(a).data(), self.grad.size());
        }
        if (g.node(b).requires_grad) {
            k::axpy(1.0, self.grad.data(), g.grad_buf(b).data(), self.grad.size());
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::add_broadcast_rows(Id a, Id b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const int r = tb.rows(), c = tb.cols();
    if (ta.cols() != c || ta.rows() % r != 0) {
        throw ShapeMismatchError("add_broadcast_rows: block shape mismatch");
    }
    const int rows = ta.rows();
    Node n;
    n.value = Tensor::zeros(ta.shape);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const double* arow = ta.data.data() + static_cast<size_t>(i) * c;
        const double* brow = tb.data.data() + static_cast<size_t>(i % r) * c;
        double* orow = n.value.data.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
            orow[j] = arow[j] + brow[j];
        }
    }
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.backprop = [a, b, rows, r, c](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            k::axpy(1.0, self.grad.data(), g.grad_buf(a).data(), self.grad.size());
        }
        if (g.node(b).requires_grad) {
            double* db = g.grad_buf(b).data();
#pragma omp parallel for schedule(static)
            for (int j = 0; j < c; ++j) {
                for (int i = 0; i < rows; ++i) {
                    db[static_cast<size_t>(i % r) * c + j] +=
                        self.grad[static_cast<size_t>(i) * c + j];
                }
            }
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::scale(Id a, double alpha) {
    const Tensor& ta = value(a);
    Node n;
    n.value = Tensor::zeros(ta.shape);
    k::scale(ta.data.data(), alpha, n.value.data.data(), ta.numel());
    n.requires_grad = node(a).requires_grad;
    n.backprop = [a, alpha](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            k::axpy(alpha, self.grad.data(), g.grad_buf(a).data(), self.grad.size());
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::relu(Id a) {
    const Tensor& ta = value(a);
    Node n;
    n.value = Tensor::zeros(ta.shape);
    k::relu_forward(ta.data.data(), n.value.data.data(), ta.numel());
    n.requires_grad = node(a).requires_grad;
    n.backprop = [a](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            k::relu_backward(g.value(a).data.data(), self.grad.data(), g.grad_buf(a).data(),
                             self.grad.size());
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::row_softmax(Id a, bool causal_mask, int block) {
    const Tensor& ta = value(a);
    const int rows = ta.rows(), cols = ta.cols();
    const int b = block > 0 ? block : rows;
    if (causal_mask && b != cols) {
        throw ShapeMismatchError("row_softmax: causal mask requires square blocks");
    }
    Node n;
    n.value = Tensor::zeros(ta.shape);
    k::softmax_rows(ta.data.data(), n.value.data.data(), rows, cols, causal_mask, b);
    n.requires_grad = node(a).requires_grad;
    n.backprop = [a, rows, cols](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            k::softmax_rows_backward(self.value.data.data(), self.grad.data(),
                                     g.grad_buf(a).data(), rows, cols);
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::layer_norm(Id a, Id gain, Id bias, double eps) {
    const Tensor& ta = value(a);
    const int rows = ta.rows(), cols = ta.cols();
    if (value(gain).numel() != static_cast<size_t>(cols) ||
        value(bias).numel() != static_cast<size_t>(cols)) {
        throw ShapeMismatchError("layer_norm: gain/bias length != feature count");
    }
    Node n;
    n.value = Tensor::zeros(ta.shape);
    n.aux2.assign(static_cast<size_t>(rows), 0.0);
    n.aux3.assign(static_cast<size_t>(rows), 0.0);
    k::layer_norm_forward(ta.data.data(), value(gain).data.data(), value(bias).data.data(),
                          n.value.data.data(), n.aux2.data(), n.aux3.data(), rows, cols, eps);
    n.requires_grad =
        node(a).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
    n.backprop = [a, gain, bias, rows, cols](Graph& g, Node& self) {
        std::vector<double> dg_local(static_cast<size_t>(cols), 0.0);
        std::vector<double> db_local(static_cast<size_t>(cols), 0.0);
        std::vector<double> dx_local(static_cast<size_t>(rows) * cols, 0.0);
        k::layer_norm_backward(g.value(a).data.data(), g.value(gain).data.data(),
                               self.aux2.data(), self.aux3.data(), self.grad.data(),
                               dx_local.data(), dg_local.data(), db_local.data(), rows, cols);
        if (g.node(a).requires_grad) {
            k::axpy(1.0, dx_local.data(), g.grad_buf(a).data(), dx_local.size());
        }
        if (g.node(gain).requires_grad) {
            k::axpy(1.0, dg_local.data(), g.grad_buf(gain).data(), dg_local.size());
        }
        if (g.node(bias).requires_grad) {
            k::axpy(1.0, db_local.data(), g.grad_buf(bias).data(), db_local.size());
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::embedding(const std::vector<Token>& tokens, Id table) {
    const Tensor& tt = value(table);
    const int d = tt.cols();
    const int rows = static_cast<int>(tokens.size());
    for (Token t : tokens) {
        if (t < 0 || t >= tt.rows()) {
            throw OutOfRangeError("embedding: token id outside table");
        }
    }
    Node n;
    n.value = Tensor::zeros({rows, d});
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        std::memcpy(n.value.data.data() + static_cast<size_t>(i) * d,
                    tt.data.data() + static_cast<size_t>(tokens[static_cast<size_t>(i)]) * d,
                    sizeof(double) * static_cast<size_t>(d));
    }
    n.requires_grad = node(table).requires_grad;
    std::vector<Token> toks = tokens;
    n.backprop = [table, toks, rows, d](Graph& g, Node& self) {
        if (!g.node(table).requires_grad) {
            return;
        }
        double* dt = g.grad_buf(table).data();
        // Rows may repeat a token id: accumulate over rows in fixed order,
        // parallel over embedding columns.
#pragma omp parallel for schedule(static)
        for (int j = 0; j < d; ++j) {
            for (int i = 0; i < rows; ++i) {
                dt[static_cast<size_t>(toks[static_cast<size_t>(i)]) * d + j] +=
                    self.grad[static_cast<size_t>(i) * d + j];
            }
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::attention(Id q, Id kk, Id v, int batch, int n_seq, bool mask,
                           const Tensor* override_attn) {
    const Tensor& tq = value(q);
    if (n_seq > 64) {
        throw ShapeMismatchError("attention: sequence length > 64 unsupported");
    }
    if (tq.rows() != batch * n_seq || value(kk).shape != tq.shape ||
        value(v).shape != tq.shape) {
        throw ShapeMismatchError("attention: q/k/v must be (batch*n) x dh");
    }
    const int dh = tq.cols();
    const double* ov = nullptr;
    if (override_attn != nullptr) {
        if (override_attn->shape != std::vector<int>{n_seq, n_seq}) {
            throw ShapeMismatchError("attention: override must be n x n");
        }
        for (int i = 0; i < n_seq; ++i) {
            double s = 0.0;
            for (int j = 0; j < n_seq; ++j) {
                s += override_attn->at(i, j);
            }
            if (std::abs(s - 1.0) > 1e-9) {
                throw NotStochasticError("attention: override rows must sum to 1");
            }
        }
        ov = override_attn->data.data();
    }
    Node n;
    n.value = Tensor::zeros(tq.shape);
    n.aux = Tensor::zeros({batch * n_seq, n_seq});
    k::attention_forward(tq.data.data(), value(kk).data.data(), value(v).data.data(),
                         n.aux.data.data(), n.value.data.data(), batch, n_seq, dh, mask, ov);
    n.requires_grad =
        node(q).requires_grad || node(kk).requires_grad || node(v).requires_grad;
    const bool overridden = override_attn != nullptr;
    n.backprop = [q, kk, v, batch, n_seq, dh, overridden](Graph& g, Node& self) {
        k::attention_backward(g.value(q).data.data(), g.value(kk).data.data(),
                              g.value(v).data.data(), self.aux.data.data(), self.grad.data(),
                              g.grad_buf(q).data(), g.grad_buf(kk).data(),
                              g.grad_buf(v).data(), batch, n_seq, dh, overridden);
    };
    return push(std::move(n));
}

const Tensor& Graph::attention_map(Id attention_id) const {
    const Node& n = nodes_[static_cast<size_t>(attention_id)];
    if (n.aux.numel() == 0) {
        throw ShapeMismatchError("attention_map: node is not an attention op");
    }
    return n.aux;
}

Graph::Id Graph::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) {
        throw ShapeMismatchError("concat_cols: no parts");
    }
    const int rows = value(parts[0]).rows();
    int total = 0;
    for (Id p : parts) {
        if (value(p).rows() != rows) {
            throw ShapeMismatchError("concat_cols: row counts differ");
        }
        total += value(p).cols();
    }
    Node n;
    n.value = Tensor::zeros({rows, total});
    bool rg = false;
    {
        int off = 0;
        for (Id p : parts) {
            const Tensor& tp = value(p);
            const int c = tp.cols();
#pragma omp parallel for schedule(static)
            for (int i = 0; i < rows; ++i) {
                std::memcpy(n.value.data.data() + static_cast<size_t>(i) * total + off,
                            tp.data.data() + static_cast<size_t>(i) * c,
                            sizeof(double) * static_cast<size_t>(c));
            }
            off += c;
            rg = rg || node(p).requires_grad;
        }
    }
    n.requires_grad = rg;
    std::vector<Id> ps = parts;
    n.backprop = [ps, rows, total](Graph& g, Node& self) {
        int off = 0;
        for (Id p : ps) {
            const int c = g.value(p).cols();
            if (g.node(p).requires_grad) {
                double* dp = g.grad_buf(p).data();
#pragma omp parallel for schedule(static)
                for (int i = 0; i < rows; ++i) {
                    const double* src = self.grad.data() + static_cast<size_t>(i) * total + off;
                    double* dst = dp + static_cast<size_t>(i) * c;
                    for (int j = 0; j < c; ++j) {
                        dst[j] += src[j];
                    }
                }
            }
            off += c;
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::cross_entropy_last_token(Id logits, const std::vector<Token>& labels,
                                          int seq_len, int vocab_size) {
    const Tensor& tl = value(logits);
    const int batch = static_cast<int>(labels.size());
    if (tl.rows() != batch * seq_len || tl.cols() != vocab_size) {
        throw ShapeMismatchError("cross_entropy_last_token: logits must be (batch*n) x V");
    }
    for (Token t : labels) {
        if (t < 0 || t >= vocab_size) {
            throw OutOfRangeError("cross_entropy_last_token: label outside [0, V)");
        }
    }
    Node n;
    n.aux = Tensor::zeros({batch, vocab_size});  // softmax of the last row per sample
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
        const double* row = tl.data.data() +
                            (static_cast<size_t>(b) * seq_len + seq_len - 1) * vocab_size;
        double* soft = n.aux.data.data() + static_cast<size_t>(b) * vocab_size;
        double mx = row[0];
        for (int j = 1; j < vocab_size; ++j) {
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < vocab_size; ++j) {
            soft[j] = std::exp(row[j] - mx);
            sum += soft[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < vocab_size; ++j) {
            soft[j] *= inv;
        }
        loss -= std::log(soft[labels[static_cast<size_t>(b)]]);
    }
    n.value = Tensor::from({1}, {loss / batch});
    n.requires_grad = node(logits).requires_grad;
    std::vector<Token> ls = labels;
    n.backprop = [logits, ls, seq_len, vocab_size](Graph& g, Node& self) {
        if (!g.node(logits).requires_grad) {
            return;
        }
        const int batch = static_cast<int>(ls.size());
        const double gscale = self.grad[0] / batch;
        double* dl = g.grad_buf(logits).data();
#pragma omp parallel for schedule(static)
        for (int b = 0; b < batch; ++b) {
            const double* soft = self.aux.data.data() + static_cast<size_t>(b) * vocab_size;
            double* drow =
                dl + (static_cast<size_t>(b) * seq_len + seq_len - 1) * vocab_size;
            for (int j = 0; j < vocab_size; ++j) {
                drow[j] += gscale * soft[j];
            }
            drow[ls[static_cast<size_t>(b)]] -= gscale;
        }
    };
    return push(std::move(n));
}

Graph::Id Graph::sum(Id a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (double v : ta.data) {
        s += v;
    }
    Node n;
    n.value = Tensor::from({1}, {s});
    n.requires_grad = node(a).requires_grad;
    n.backprop = [a](Graph& g, Node& self) {
        if (g.node(a).requires_grad) {
            std::vector<double>& da = g.grad_buf(a);
            const double gv = self.grad[0];
            for (double& v : da) {
                v += gv;
            }
        }
    };
    return push(std::move(n));
}

void Graph::backward(Id loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1) {
        throw NotScalarError("backward: loss must be a scalar");
    }
    for (Node& n : nodes_) {
        if (n.requires_grad) {
            n.grad.assign(n.value.numel(), 0.0);
        }
    }
    grad_buf(loss)[0] = 1.0;
    for (Id id = loss; id >= 0; --id) {
        Node& n = node(id);
        if (n.requires_grad && n.backprop && !n.grad.empty()) {
            n.backprop(*this, n);
        }
    }
}

}  // namespace anchorlab::diffcore
