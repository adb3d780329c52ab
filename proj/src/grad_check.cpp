#include "flap/grad_check.hpp"

#include <cmath>
#include <cstdlib>

namespace flap {

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  Tensor x, double h) {
  x.set_requires_grad(true);
  x.zero_grad();

  Tape tape;
  Tensor loss = f(tape, x);
  tape.backward(loss);
  std::vector<double> analytic(x.grad(), x.grad() + x.size());

  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double saved = x.at(i);

    x.at(i) = saved + h;
    Tape fwd(false);
    double up = f(fwd, x).value();

    x.at(i) = saved - h;
    Tape bwd(false);
    double down = f(bwd, x).value();

    x.at(i) = saved;
    double numeric = (up - down) / (2.0 * h);
    double err = std::abs(analytic[i] - numeric) /
                 std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace flap
