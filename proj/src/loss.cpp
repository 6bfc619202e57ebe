#include "leaf/network.hpp"

namespace leaf {

namespace {
constexpr Real kProbFloor = Real(1e-7);
}

Tensor ppa_weights(const Tensor& gt) {
    if (gt.rank() != 3) throw ShapeError("ppa_weights expects [1,H,W], got " + shape_str(gt.shape()));
    NoGradGuard no_grad;
    Tensor pooled = avgpool2d(constant(gt), 15, 1, 7).value();
    Tensor w(gt.shape());
    for (Index i = 0; i < w.size(); ++i) w[i] = Real(1) + Real(5) * std::abs(pooled[i] - gt[i]);
    return w;
}

Var ppa_loss(const Var& pred, const Tensor& gt) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError("ppa_loss: prediction " + shape_str(pred.shape()) + " vs ground truth " +
                         shape_str(gt.shape()));
    }
    for (Real g : gt.data()) {
        if (g != 0 && g != 1) throw ContractError("ppa_loss: ground truth must be binary");
    }
    const Tensor w = ppa_weights(gt);
    Real w_sum = 0;
    for (Real v : w.data()) w_sum += v;

    Var p = clamp(pred, kProbFloor, Real(1) - kProbFloor);
    Var g = constant(gt);
    Var gn = constant(Tensor::ones(gt.shape())) - g;
    Var weight = constant(w);
    Var bce = neg(g * log(p) + gn * log(add_scalar(neg(p), Real(1))));
    Var wbce = sum_all(weight * bce) * (Real(1) / w_sum);

    Var inter = sum_all(p * g * weight);
    Var uni = sum_all((p + g) * weight);
    Var wiou = add_scalar(neg(add_scalar(inter, Real(1)) / add_scalar(uni - inter, Real(1))), Real(1));
    return wbce + wiou;
}

Var deep_supervision_loss(const Predictions& preds, const Tensor& gt) {
    Var total = ppa_loss(preds.p[0], gt);
    for (int i = 1; i < 4; ++i) total = total + ppa_loss(preds.p[i], gt);
    return total;
}

}  // namespace leaf
