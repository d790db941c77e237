#pragma once

#include "gsgan/tape.hpp"

namespace gsgan {

// Hinge-adversarial loss on raw logits:
//   L_D = E[max(0, 1 - d_real)] + E[max(0, 1 + d_fake)]
//   L_G = -E[d_fake]
template <typename S>
Var hinge_loss_d(Tape<S>& t, Var d_real, Var d_fake) {
    Var real_term = t.mean_all(t.relu(t.affine(d_real, S(-1), S(1))));
    Var fake_term = t.mean_all(t.relu(t.affine(d_fake, S(1), S(1))));
    return t.add(real_term, fake_term);
}

template <typename S>
Var hinge_loss_g(Tape<S>& t, Var d_fake) {
    return t.affine(t.mean_all(d_fake), S(-1), S(0));
}

// Standard (non-saturating-free) GAN loss; logits go through a sigmoid here,
// logs floored at 1e-12:
//   L_D = -E[log D(x)] - E[log(1 - D(G(z)))]
//   L_G = -E[log D(G(z))]
template <typename S>
Var standard_loss_d(Tape<S>& t, Var d_real, Var d_fake) {
    const S floor = S(1e-12);
    Var p_real = t.sigmoid(d_real);
    Var p_fake = t.sigmoid(d_fake);
    Var real_term = t.mean_all(t.log_clamped(p_real, floor));
    Var fake_term = t.mean_all(t.log_clamped(t.affine(p_fake, S(-1), S(1)), floor));
    return t.affine(t.add(real_term, fake_term), S(-1), S(0));
}

template <typename S>
Var standard_loss_g(Tape<S>& t, Var d_fake) {
    const S floor = S(1e-12);
    return t.affine(t.mean_all(t.log_clamped(t.sigmoid(d_fake), floor)), S(-1), S(0));
}

}  // namespace gsgan
