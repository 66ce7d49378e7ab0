#pragma once

#include <functional>
#include <vector>

#include "anchorlab/tensor.hpp"

namespace anchorlab::diffcore {

// Tape-based reverse-mode differentiation over 2-D tensors. Ops execute
// eagerly; backward() walks the tape in reverse. Nodes are referenced by
// index, so the tape may grow without invalidating handles.
class Graph {
public:
    using Id = int;

    // Leaf holding a constant value.
    Id input(Tensor t);
    // Leaf bound to an external parameter; backward accumulates into p.grad.
    Id param(Tensor& p);

    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    // a is (blocks*r) x c, b is r x c; adds b to every r-row block of a.
    Id add_broadcast_rows(Id a, Id b);
    Id scale(Id a, double alpha);
    Id relu(Id a);
    Id row_softmax(Id a, bool causal_mask = false, int block = 0);
    Id layer_norm(Id a, Id gain, Id bias, double eps = 1e-5);
    // Gathers table rows: out row r = table[tokens[r]].
    Id embedding(const std::vector<Token>& tokens, Id table);
    // q,k,v: (batch*n) x dh. Row-stochastic maps retrievable via attention_map.
    // override_attn, when set, must be an n x n row-stochastic matrix.
    Id attention(Id q, Id k, Id v, int batch, int n, bool mask,
                 const Tensor* override_attn = nullptr);
    Id concat_cols(const std::vector<Id>& parts);
    // Mean over samples of -log softmax(last row of each n-row block)[label].
    Id cross_entropy_last_token(Id logits, const std::vector<Token>& labels, int seq_len,
                                int vocab_size);
    Id sum(Id a);

    const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    const std::vector<double>& grad_of(Id id) const {
        return nodes_[static_cast<size_t>(id)].grad;
    }
    // The per-sample attention maps of an attention node: batch blocks of n x n.
    const Tensor& attention_map(Id attention_id) const;

    // Populates grads of every requires-grad tensor reachable from loss.
    // Repeated calls accumulate additively into bound parameter grads.
    void backward(Id loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        Tensor* bound = nullptr;                    // param leaf target
        Tensor aux;                                 // op-specific (attention maps, softmax out)
        std::vector<double> aux2, aux3;             // op-specific scratch (LN mean/rstd)
        std::function<void(Graph&, Node&)> backprop;
    };

    Id push(Node node);
    Node& node(Id id) { return nodes_[static_cast<size_t>(id)]; }
    std::vector<double>& grad_buf(Id id);

    std::vector<Node> nodes_;
};

}  // namespace anchorlab::diffcore
