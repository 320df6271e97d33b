#include <doctest.h>

#include "openviewer/config.hpp"
#include "openviewer/errors.hpp"
#include "openviewer/version.hpp"

using namespace openviewer;

TEST_CASE("config round trip and propagation") {
  io::json j = {{"seed", 9},
                {"train", {{"epochs", 7}, {"layers", 2}, {"grad_clip", 1.0}, {"ablation", "no_dn"}}},
                {"loss", {{"lambda1", 0.0}}},
                {"admm", {{"gamma", 2.5}}}};
  RunConfig c = run_config_from_json(j);
  CHECK(c.train.epochs == 7);
  CHECK(c.train.seed == 9);
  CHECK(c.synth.seed == 9);
  CHECK(c.train.loss.lambda1 == 0.0);
  CHECK(c.train.admm.gamma == 2.5);
  CHECK(c.train.ablation == Ablation::no_dn);
  CHECK(c.train.grad_clip == 1.0);
  RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back).dump() == to_json(c).dump());
  CHECK(to_json(RunConfig{})["schema_version"] == kSchemaVersion);
}

TEST_CASE("config rejects unknown keys, bad types and schema mismatch") {
  CHECK_THROWS_AS(run_config_from_json({{"sedd", 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"epoch", 1}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"epochs", "ten"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"schema_version", kSchemaVersion + 1}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"split", {{"openness", 1.0}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"eval", {{"score", "max"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"epochs", 0}}}}), ConfigError);
}

TEST_CASE("SynthSpec json round trip") {
  SynthSpec s;
  s.classes = 6;
  s.seed = 4;
  SynthSpec t = synth_spec_from_json(to_json(s));
  CHECK(t.classes == 6);
  CHECK(t.seed == 4);
  CHECK_THROWS_AS(synth_spec_from_json({{"classes", 2}}), ConfigError);
}

TEST_CASE("version string") {
  CHECK(std::string(kVersion) == "1.0.0");
  CHECK(version_info().find(kVersion) != std::string::npos);
}
