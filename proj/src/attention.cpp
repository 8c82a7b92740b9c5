#include "conqar/attention.hpp"

#include <array>

#include "conqar/errors.hpp"

namespace conqar {

Tensor mutual_matrix(Tape& tape, const Tensor& rho_u, const Tensor& rho_v) {
    if (rho_u.shape() != rho_v.shape() || rho_u.rank() != 2 || rho_u.rows() != rho_u.cols()) {
        throw DimensionError("mutual_matrix: density matrices " + shape_string(rho_u.shape()) + " and " +
                             shape_string(rho_v.shape()) + " must be square and of equal size");
    }
    return matmul(tape, rho_u, transpose(tape, rho_v));
}

std::pair<Tensor, Tensor> pooled_attention(Tape& tape, const Tensor& m, Pooling kind) {
    if (m.rank() != 2 || m.rows() != m.cols()) {
        throw DimensionError("pooled_attention: matrix must be square, got " + shape_string(m.shape()));
    }
    Tensor theta = pool_rows(tape, m, kind);
    Tensor gamma = pool_cols(tape, m, kind);
    return {softmax(tape, theta), softmax(tape, gamma)};
}

MutualAttention mutual_attention(Tape& tape, const Tensor& rho_u, const Tensor& rho_v, Pooling kind) {
    MutualAttention att;
    att.matrix = mutual_matrix(tape, rho_u, rho_v);
    att.trace = trace(tape, att.matrix);
    att.diag = diagonal(tape, att.matrix);
    std::tie(att.a_u, att.a_v) = pooled_attention(tape, att.matrix, kind);
    return att;
}

FusedRepresentation fuse(Tape& tape, const Tensor& rho_u, const Tensor& rho_v, const MutualAttention& attention) {
    Tensor z_u = matvec(tape, rho_u, attention.a_u);
    Tensor z_v = matvec(tape, transpose(tape, rho_v), attention.a_v);
    const std::array<Tensor, 4> parts{attention.trace, attention.diag, z_u, z_v};
    return FusedRepresentation{concat(tape, parts)};
}

FusedRepresentation fuse(Tape& tape, const Tensor& rho_u, const Tensor& rho_v, const Tensor& m, Pooling kind) {
    MutualAttention att;
    att.matrix = m;
    att.trace = trace(tape, m);
    att.diag = diagonal(tape, m);
    std::tie(att.a_u, att.a_v) = pooled_attention(tape, m, kind);
    return fuse(tape, rho_u, rho_v, att);
}

FusedRepresentation interaction_only(Tape& tape, const Tensor& m) {
    const std::array<Tensor, 2> parts{trace(tape, m), diagonal(tape, m)};
    return FusedRepresentation{concat(tape, parts)};
}

FusedRepresentation feature_map_attention(Tape& tape, const Tensor& features_u, const Tensor& features_v,
                                          Pooling kind, MutualAttention* attention_out) {
    if (features_u.rank() != 2 || features_u.shape() != features_v.shape()) {
        throw DimensionError("feature_map_attention: feature maps " + shape_string(features_u.shape()) + " and " +
                             shape_string(features_v.shape()) + " differ");
    }
    MutualAttention att;
    att.matrix = matmul(tape, features_u, transpose(tape, features_v));
    att.trace = trace(tape, att.matrix);
    att.diag = diagonal(tape, att.matrix);
    std::tie(att.a_u, att.a_v) = pooled_attention(tape, att.matrix, kind);
    Tensor z_u = mul(tape, att.a_u, pool_rows(tape, features_u, Pooling::Mean));
    Tensor z_v = mul(tape, att.a_v, pool_rows(tape, features_v, Pooling::Mean));
    const std::array<Tensor, 4> parts{att.trace, att.diag, z_u, z_v};
    if (attention_out) *attention_out = att;
    return FusedRepresentation{concat(tape, parts)};
}

}  // namespace conqar
