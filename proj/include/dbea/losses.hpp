#pragma once

#include <vector>

#include "dbea/matching.hpp"
#include "dbea/model.hpp"
#include "dbea/world.hpp"

namespace dbea {

struct LossWeights {
  double lambda_ta = 1.0;
  double lambda_tq = 10.0;
  double lambda_div = 40.0;
  double w_cls = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;
  double epsilon_tq = 1e-4;

  MatchCostWeights match_weights() const { return {w_cls, w_l1, w_giou}; }
  void validate() const;
};

struct LossBreakdown {
  double base = 0.0;
  double ta = 0.0;
  double tq = 0.0;
  double tandem = 0.0;  // lambda_ta * ta + lambda_tq * tq
  double diversity = 0.0;
  double total = 0.0;
};

// A scalar plus its gradient with respect to both heads' outputs. Each component loss fills only
// the blocks it depends on; the rest stay zero.
struct TandemLoss {
  double value = 0.0;
  HeadGrad alpha;
  HeadGrad beta;
};

TandemLoss zero_loss(const HeadOutput& alpha, const HeadOutput& beta);

// Unweighted parts of one head's base loss, each a mean over queries.
struct BaseTerms {
  double cls = 0.0;   // softmax cross-entropy (matched: GT class, unmatched: no-object)
  double l1 = 0.0;    // matched queries only
  double giou = 0.0;  // 1 - GIoU, matched queries only
};

// Base detection loss of a single head; gradient written into `grad` (may be null).
double head_base_loss(const HeadOutput& head, const MatchAssignment& match, const std::vector<SceneObject>& gt,
                      const LossWeights& w, HeadGrad* grad, BaseTerms* terms = nullptr);

// Base loss averaged over both heads.
TandemLoss base_loss(const TandemOutput& out, const MatchAssignment& match, const std::vector<SceneObject>& gt,
                     const LossWeights& w);

// Mean over matched queries of sum_{x,y,w,h} |alpha - beta|. Subgradient 0 at equality.
TandemLoss tandem_aiding(const HeadOutput& alpha, const HeadOutput& beta, const MatchAssignment& match);

// Mean over unmatched queries of sum_{x,y,w,h} 1 / sqrt((alpha - beta)^2 + eps).
TandemLoss tandem_quelling(const HeadOutput& alpha, const HeadOutput& beta, const MatchAssignment& match,
                           double epsilon);

// Mean over all queries of cosine(Z_alpha, Z_beta). Queries with a near-zero logit vector add 0.
TandemLoss diversity_loss(const HeadOutput& alpha, const HeadOutput& beta);

struct DbeaLoss {
  LossBreakdown breakdown;
  HeadGrad alpha;
  HeadGrad beta;
};

// total = base + lambda_ta * ta + lambda_tq * tq + lambda_div * diversity. The tandem terms touch
// box outputs only, diversity touches logits only. With `tandem == false` (vanilla) only the base
// loss of the alpha head is used.
DbeaLoss dbea_loss(const TandemOutput& out, const MatchAssignment& match, const std::vector<SceneObject>& gt,
                   const LossWeights& w, bool tandem = true);

}  // namespace dbea
