#pragma once

#include <utility>

#include "conqar/numerics.hpp"

namespace conqar {

struct MutualAttention {
    Tensor matrix;  // M = rho_u * rho_v^T, [n x n], not symmetrized
    Tensor trace;   // tr(M), scalar
    Tensor diag;    // diag(M), [n]
    Tensor a_u;     // softmax of row pools, [n]
    Tensor a_v;     // softmax of column pools, [n]
};

/// z = [tr(M) | diag(M) | z_u | z_v], length 3n + 1 for the full model.
struct FusedRepresentation {
    Tensor z;
};

Tensor mutual_matrix(Tape& tape, const Tensor& rho_u, const Tensor& rho_v);

// a_u = softmax(row pools of M), a_v = softmax(column pools of M).
std::pair<Tensor, Tensor> pooled_attention(Tape& tape, const Tensor& m, Pooling kind = Pooling::Mean);

MutualAttention mutual_attention(Tape& tape, const Tensor& rho_u, const Tensor& rho_v, Pooling kind = Pooling::Mean);

// z_u = rho_u a_u, z_v = a_v^T rho_v.
FusedRepresentation fuse(Tape& tape, const Tensor& rho_u, const Tensor& rho_v, const MutualAttention& attention);
FusedRepresentation fuse(Tape& tape, const Tensor& rho_u, const Tensor& rho_v, const Tensor& m,
                         Pooling kind = Pooling::Mean);

// Ablation Conv+Quant: [tr(M) | diag(M)], length n + 1.
FusedRepresentation interaction_only(Tape& tape, const Tensor& m);

// Ablation Conv+Mutual: M' = C_u C_v^T with attention over filters;
// z_u[s] = a_u[s] * mean_i C_u[s][i] (same for v). Length 3n + 1.
FusedRepresentation feature_map_attention(Tape& tape, const Tensor& features_u, const Tensor& features_v,
                                          Pooling kind, MutualAttention* attention_out = nullptr);

}  // namespace conqar
