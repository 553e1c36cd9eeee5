// Library walkthrough on the planted-concept toy task: extract from the
// 6-layer source, tune lambda on the 4-layer target, then compare baseline,
// lambda_best and ITS on the test split.

#include <cstdio>

#include "steer/steer.hpp"

int main() {
  using namespace steer;
  const auto task = toy::planted_task();
  const ByteTokenizer tokenizer;

  ExtractionOptions extraction;
  extraction.dataset_id = "toy";
  const auto set = extract_steering_set(task.source, tokenizer, build_contrastive_pairs(task.train),
                                        extraction);
  for (std::size_t l = 0; l < set.num_layers; ++l) {
    double c = 0.0;
    for (std::size_t i = 0; i < set.hidden_dim; ++i) c += set.directions[l][i] * task.concept_direction[i];
    std::printf("source layer %zu: cos(PC1, concept) = %.4f, explained variance = %.3f\n", l, c,
                set.explained_variance[l]);
  }

  const EvalTask val{"toy", task.val, {}, "", task.style};
  const auto tuned = sweep(task.target, tokenizer, set, std::nullopt, val, default_grid(), task.params);
  std::printf("validation baseline %.3f, lambda_best %s\n", tuned.baseline->accuracy,
              format_real(tuned.lambda_best).c_str());

  const EvalTask test{"toy", task.test, {}, "", task.style};
  const auto its = run_with_its(task.target, tokenizer, set, std::nullopt, test, default_grid(),
                                task.params);
  double at_best = 0.0;
  for (const auto& p : its.per_lambda.points) {
    if (p.lambda == tuned.lambda_best) at_best = p.metric;
  }
  std::printf("test baseline %.3f, steered %.3f, ITS %.3f\n", its.per_lambda.baseline->accuracy, at_best,
              its.aggregated.accuracy);
  return 0;
}
