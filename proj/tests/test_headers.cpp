// Every public header must be self-contained and coexist in one TU.

#include "muser/autograd.hpp"
#include "muser/config.hpp"
#include "muser/datamodel.hpp"
#include "muser/embed.hpp"
#include "muser/errors.hpp"
#include "muser/evaluation.hpp"
#include "muser/extract.hpp"
#include "muser/features.hpp"
#include "muser/harmony.hpp"
#include "muser/jsonio.hpp"
#include "muser/losses.hpp"
#include "muser/model.hpp"
#include "muser/nn.hpp"
#include "muser/rng.hpp"
#include "muser/tensor.hpp"
#include "muser/trainer.hpp"

#include <catch2/catch_amalgamated.hpp>

TEST_CASE("tiny model constructs and runs forward") {
  muser::ModelConfig cfg;
  cfg.d_root = 4;
  cfg.d_quality = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.d_mert = 6;
  cfg.d_key = 2;
  cfg.projection = 8;
  cfg.branch_hidden = 4;
  cfg.n_tags = 3;
  cfg.t_max = 8;
  cfg.dropout = 0.0;
  muser::Model model(cfg, muser::BranchSet::student(), 7);

  muser::SampleInput in;
  in.tokens = muser::tokenize({muser::Chord{0, muser::ChordQuality::maj, 0.0, 1.0}}, 8);
  in.mert.assign(6, 0.25);
  in.key_scalar = 0.0;
  muser::ForwardOutput out = model.forward_eval(in);
  REQUIRE(out.has_tags);
  REQUIRE(out.has_va);
  REQUIRE(out.tag_probs.size() == 3);
  for (double p : out.tag_probs) {
    REQUIRE(p > 0.0);
    REQUIRE(p < 1.0);
  }
}
