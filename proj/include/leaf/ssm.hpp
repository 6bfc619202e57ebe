#pragma once

#include "leaf/ops.hpp"
#include "leaf/params.hpp"

namespace leaf {

/// Per-branch selective-scan parameters. The state matrix is diagonal and
/// stored as a_log with A = -exp(a_log), so realized entries are negative.
struct SsmParams {
    Var a_log;  // [channels, N]
    Var d;      // [channels]
    Var w_b;    // [N, channels]
    Var w_c;    // [N, channels]
    Var w_dt;   // [channels, channels]
    Var b_dt;   // [channels]

    Index channels() const { return a_log.dim(0); }
    Index state_dim() const { return a_log.dim(1); }

    /// A_n = -n, D = 1, softplus(b_dt) uniform in [1e-3, 1e-1].
    static SsmParams create(const Scope& scope, Index channels, Index state_dim, Init& init);
};

/// Sequence inputs: x[ch,L], b[N,L], c[N,L], delta[ch,L] with delta > 0.
struct ScanInputs {
    Var x;
    Var b;
    Var c;
    Var delta;
};

struct Discretized {
    Tensor a_bar;  // [ch, N, L]
    Tensor b_bar;  // [ch, N, L]
};

/// Zero-order hold with the first-order input matrix: a_bar = exp(delta*A),
/// b_bar = delta*B. A[ch,N], B[N,L], delta[ch,L].
Discretized discretize(const Tensor& a, const Tensor& b, const Tensor& delta);

Var realized_a(const SsmParams& p);

/// h_t = a_bar_t h_{t-1} + b_bar_t x_t, y_t = C_t h_t + D x_t with h_0 = 0.
/// A[ch,N] and D[ch] are the realized state matrix and skip weights.
Var selective_scan(const Var& a, const Var& d, const ScanInputs& in);

Var selective_scan_recurrent(const SsmParams& p, const ScanInputs& in);

/// Time-invariant reference: builds the kernel (CB, CAB, ..., CA^{L-1}B) and
/// convolves it with x. Rejects inputs whose b, c or delta vary along t.
Tensor selective_scan_conv(const Tensor& a, const Tensor& d, const Tensor& x, const Tensor& b, const Tensor& c,
                           const Tensor& delta);

struct Projections {
    Var b;
    Var c;
    Var delta;
};

/// Input-dependent B, C and delta = softplus(W_dt x + b_dt) for x[ch,L].
Projections project(const SsmParams& p, const Var& x_seq);

Var s6_branch(const Var& x_seq, const SsmParams& p);

}  // namespace leaf
