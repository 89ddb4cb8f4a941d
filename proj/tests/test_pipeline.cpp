#include "abnode/kvfile.hpp"
#include "abnode/pipeline.hpp"
#include "abnode_c.h"
#include "support.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>

using namespace abnode;
using abnode::testing::TempDir;

namespace {

const char* kTiny =
    "[general]\nseed = 7\n"
    "[data]\nconfigs = 8\nspiral_samples = 200, 260\nlinear_samples = 150, 180\n"
    "[train]\nmodels = fp, abnode\nn1 = 1\nn2 = 1\nmax_samples = 30\n";

struct CliResult {
  int code = -1;
  std::string err;
};

CliResult cli(const TempDir& dir, const std::string& args) {
  const std::string err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + ABNODE_CLI_PATH + "' " + args + " >/dev/null 2>'" + err + "'";
  const int st = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.err = std::filesystem::exists(err) ? read_file(err) : "";
  return r;
}

}  // namespace

TEST_CASE("run configuration parsing") {
  const RunConfig d = parse_run_config("");
  CHECK(d.seed == 20240601);
  CHECK(d.models.size() == 6);
  const RunConfig t = parse_run_config(kTiny, "tiny.cfg");
  CHECK(t.seed == 7);
  CHECK(t.gen.config_ids == std::vector<int>{8});
  CHECK(t.fit.train.n1 == 1);
  CHECK(t.models.size() == 2);

  // the canonical text parses back to itself
  const std::string canon = format_run_config(t);
  CHECK(format_run_config(parse_run_config(canon)) == canon);

  const auto message = [](const std::string& text) -> std::string {
    try {
      parse_run_config(text, "bad.cfg");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfig);
      return e.what();
    }
    return "";
  };
  CHECK(message("[data]\ndisplacements = 0, 7\n").find("data.displacements") != std::string::npos);
  CHECK(message("[train]\nepochz = 3\n").find("train.epochz") != std::string::npos);
  CHECK(message("[train]\nmodels = fp, warp\n").find("train.models") != std::string::npos);
  CHECK(message("[train]\nn1 = -2\n").find("train.n1") != std::string::npos);
  CHECK(study_names().size() == 4);
  CHECK(checkpoint_path("run", ModelKind::kAbnode, 8) != checkpoint_path("run", ModelKind::kBnode, 8));
}

TEST_CASE("C API status codes and model evaluation") {
  abnode_config* cfg = nullptr;
  CHECK(abnode_config_parse("[data]\ndisplacements = 7\n", &cfg) == ABNODE_ERR_CONFIG);
  CHECK(std::strstr(abnode_last_error(), "data.displacements") != nullptr);
  CHECK(std::string(abnode_last_error_kind()) == "ConfigError");
  CHECK(abnode_config_load("/nonexistent/x.cfg", &cfg) != ABNODE_OK);
  abnode_model* model = nullptr;
  CHECK(abnode_model_load("/nonexistent/m.ckpt", &model) == ABNODE_ERR_MISSING_ARTIFACT);
  CHECK(abnode_config_parse(nullptr, &cfg) == ABNODE_ERR_INVALID_ARGUMENT);

  REQUIRE(abnode_config_parse(kTiny, &cfg) == ABNODE_OK);
  uint64_t seed = 0;
  CHECK(abnode_config_seed(cfg, &seed) == ABNODE_OK);
  CHECK(seed == 7);
  CHECK(abnode_config_set_jobs(cfg, 0) != ABNODE_OK);
  CHECK(std::string(abnode_config_models(cfg)) == "fp,abnode");
  char* text = nullptr;
  REQUIRE(abnode_config_format(cfg, &text) == ABNODE_OK);
  CHECK(std::string(text).find("seed = 7") != std::string::npos);
  abnode_string_free(text);

  TempDir dir("capi");
  const std::string ds = dir / "dataset";
  REQUIRE(abnode_generate(cfg, ds.c_str()) == ABNODE_OK);
  abnode_dataset* data = nullptr;
  REQUIRE(abnode_dataset_load(ds.c_str(), &data) == ABNODE_OK);
  CHECK(abnode_dataset_config_count(data) == 1);
  CHECK(abnode_dataset_trajectory_count(data) == 4);
  abnode_dataset_free(data);
  CHECK(abnode_eval(cfg, ds.c_str(), "abnode", (dir / "run").c_str()) == ABNODE_ERR_MISSING_ARTIFACT);
  CHECK(abnode_train(cfg, ds.c_str(), "warp", (dir / "run").c_str()) == ABNODE_ERR_CONFIG);
  CHECK(abnode_study(cfg, ds.c_str(), "timestep", (dir / "run").c_str()) != ABNODE_OK);
  CHECK(std::string(abnode_last_error_kind()) == "SequenceTooShort");
  abnode_config_free(cfg);

  // truth model through the C boundary agrees with the C++ field
  const PhysParams truth = default_truth_params();
  const ResidualSpec res;
  save_checkpoint(dir / "truth.ckpt", truth_model(truth, res));
  REQUIRE(abnode_model_load((dir / "truth.ckpt").c_str(), &model) == ABNODE_OK);
  CHECK(std::string(abnode_model_kind(model)) == "truth");
  StateVec x = abnode::testing::rest_state();
  x[sx::kVel] = 0.4;
  x[sx::kOmega + 2] = 0.2;
  ControlVec u = ControlVec::Zero();
  u[0] = 0.01;
  u[1] = 0.05;
  StateVec dx;
  REQUIRE(abnode_model_derivative(model, x.data(), u.data(), dx.data()) == ABNODE_OK);
  CHECK(dx == truth_derivative(x, u, truth, res));

  constexpr std::size_t n = 30;
  std::vector<double> us(n * ABNODE_CONTROL_DIM), out((n + 1) * ABNODE_STATE_DIM);
  for (std::size_t k = 0; k < n; ++k) std::copy(u.data(), u.data() + 5, us.data() + k * 5);
  REQUIRE(abnode_model_rollout(model, x.data(), us.data(), n, 1.0 / 60, out.data()) == ABNODE_OK);
  const Model m = load_checkpoint(dir / "truth.ckpt");
  const auto field = m.field();
  const Eigen::VectorXd p = m.flat_params();
  const Rollout r = rollout(*field, {p.data(), static_cast<std::size_t>(p.size())}, x,
                            std::vector<ControlVec>(n, u), 1.0 / 60, n + 1);
  for (std::size_t k = 0; k <= n; ++k)
    CHECK(Eigen::Map<const StateVec>(out.data() + k * ABNODE_STATE_DIM) == r.states[k]);
  CHECK(abnode_model_derivative(model, nullptr, u.data(), dx.data()) == ABNODE_ERR_INVALID_ARGUMENT);
  abnode_model_free(model);
}

TEST_CASE("command line exit codes and manifests") {
  TempDir dir("cli");
  const std::string good = dir / "tiny.cfg";
  write_file_atomic(good, kTiny);
  const std::string bad = dir / "bad.cfg";
  write_file_atomic(bad, "[data]\ndisplacements = 0, 7\n");
  const std::string run = dir / "run";

  const CliResult b = cli(dir, "-c '" + bad + "' -o '" + run + "' generate");
  CHECK(b.code == 2);
  CHECK(b.err.find("data.displacements") != std::string::npos);
  CHECK(cli(dir, "--no-such-flag").code == 2);

  const CliResult g = cli(dir, "-c '" + good + "' -o '" + run + "' generate");
  REQUIRE(g.code == 0);
  const std::string manifest = run + "/manifests/generate.manifest";
  REQUIRE(std::filesystem::exists(manifest));
  const KvDocument doc = KvDocument::parse(read_file(manifest));
  CHECK(doc.get_string("command") == "generate");
  CHECK(doc.get_string("status") == "ok");
  CHECK(doc.get_int("seed", 0) == 7);

  const CliResult e = cli(dir, "-c '" + good + "' -o '" + run + "' eval abnode");
  CHECK(e.code == 5);
  const CliResult t = cli(dir, "-c '" + good + "' -o '" + run + "' study timestep");
  CHECK(t.code != 0);
  CHECK(t.err.find("SequenceTooShort") != std::string::npos);

  REQUIRE(cli(dir, "-c '" + good + "' -o '" + run + "' train fp").code == 0);
  CHECK(std::filesystem::exists(checkpoint_path(run, ModelKind::kFirstPrinciple, 8)));
  CHECK(cli(dir, "-c '" + good + "' -o '" + run + "' eval fp").code == 0);
}
