// Times the parallel kernels against their serial paths.
//   bench_kernels [batch] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "turnrl/objective.hpp"
#include "turnrl/parallel.hpp"
#include "turnrl/rollout.hpp"

using namespace turnrl;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count());
  }
  return best;
}

void report(const char* kernel, double serial, double parallel) {
  std::printf("%-10s serial=%9.2f ms  parallel=%9.2f ms  speedup=%.2fx\n", kernel, serial, parallel,
              serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t batch = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 128;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
  std::printf("threads=%d batch=%zu repeats=%d\n", max_threads(), batch, repeats);

  model::PolicyModel actor(model::default_architecture(false), 1);
  model::PolicyModel critic(model::default_architecture(true), 2);
  rollout::CollectOptions co;
  co.env.width = 4;
  co.env.height = 4;
  co.batch_size = batch;
  co.max_response_tokens = 4;

  rollout::RolloutBatch collected;
  const double collect_serial =
      best_ms(repeats, [&] { collected = rollout::collect(actor, &critic, co, model::Execution::serial); });
  const double collect_parallel =
      best_ms(repeats, [&] { collected = rollout::collect(actor, &critic, co, model::Execution::parallel); });
  report("collect", collect_serial, collect_parallel);

  std::vector<estimator::AdvantageSet> adv(collected.trajectories.size());
  for (auto& a : adv) a.advantages = {1.0};
  const auto loss = objective::actor_loss(actor, collected.trajectories, adv,
                                          objective::all_indices(adv.size()), {});
  const auto run = [&](auto&& pass) {
    return best_ms(repeats, [&] {
      model::zero_grads(actor.params());
      pass();
    });
  };
  const double ref = run([&] { actor.backward_reference(loss.node); });
  const double serial = run([&] { actor.backward(loss.node, model::Execution::serial); });
  const auto serial_grads = actor.params().grads;
  const double parallel = run([&] { actor.backward(loss.node, model::Execution::parallel); });
  std::printf("%-10s %9.2f ms\n", "reference", ref);
  report("backward", serial, parallel);
  std::printf("backward serial==parallel: %s\n", serial_grads == actor.params().grads ? "yes" : "no");
  return 0;
}
