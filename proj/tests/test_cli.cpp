// End-to-end tests of the command line interface, run as subprocesses
// against the installed binary.
#include <fstream>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using nlohmann::json;
using testutil::CliResult;
using testutil::TempDir;
using testutil::run_cli;
using testutil::slurp;

namespace {

const std::string kCli = HYDROTRACK_CLI_PATH;

int count_lines(const std::string& text) {
  int n = 0;
  for (char ch : text)
    if (ch == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("help and usage exits") {
  CHECK(run_cli(kCli, "--help").exit_code == 0);
  CHECK(run_cli(kCli, "").exit_code != 0);
  CHECK(run_cli(kCli, "no-such-command").exit_code == 1);
  CHECK(run_cli(kCli, "train --bogus-flag 1").exit_code == 1);
}

TEST_CASE("solution calibration loop recovers the hidden gains") {
  TempDir dir("cal");
  CliResult gen = run_cli(
      kCli, "gen-data --preset solutions --gain-errors --seed 40 --out \"" +
                dir.str("sol") + "\"");
  REQUIRE(gen.exit_code == 0);

  CliResult cal = run_cli(
      kCli, "calibrate --measured \"" + dir.str("sol/solution_measured.csv") +
                "\" --reference \"" + dir.str("sol/solution_reference.csv") +
                "\" --out \"" + dir.str("cal") + "\"");
  REQUIRE(cal.exit_code == 0);

  json profile = json::parse(slurp(dir.str("cal/profile.json")));
  json truth = json::parse(slurp(dir.str("sol/solution_truth.json")));
  REQUIRE(profile.at("gains").size() == 18);
  for (int c = 0; c < 18; ++c) {
    double fitted = profile.at("gains")[c].get<double>();
    double hidden = truth.at("hidden_gains")[c].get<double>();
    CHECK(std::abs(fitted / hidden - 1.0) < 1e-9);
  }
}

TEST_CASE("cohort, train, evaluate, cv, per-subject, compile, stream") {
  TempDir dir("e2e");
  CliResult gen = run_cli(
      kCli,
      "gen-data --preset default --subjects 3 --duration 300 --seed 77 "
      "--out \"" + dir.str("data") + "\"");
  REQUIRE(gen.exit_code == 0);
  REQUIRE(std::filesystem::exists(dir.str("data/manifest.json")));

  CliResult train = run_cli(
      kCli, "train --manifest \"" + dir.str("data/manifest.json") +
                "\" --trees 25 --seed 5 --out \"" + dir.str("model") + "\"");
  REQUIRE(train.exit_code == 0);
  REQUIRE(std::filesystem::exists(dir.str("model/model.bin")));
  REQUIRE(std::filesystem::exists(dir.str("model/model.json")));
  REQUIRE(std::filesystem::exists(dir.str("model/report.json")));
  REQUIRE(std::filesystem::exists(dir.str("model/dataset.csv")));
  REQUIRE(std::filesystem::exists(dir.str("model/run_config.json")));

  std::string model_bytes = slurp(dir.str("model/model.bin"));
  CHECK(model_bytes.size() <= 65536);
  CHECK(model_bytes.substr(0, 4) == "HTRK");

  SUBCASE("evaluate against the binary model") {
    CliResult eval = run_cli(
        kCli, "evaluate --dataset \"" + dir.str("model/dataset.csv") +
                  "\" --model \"" + dir.str("model/model.bin") +
                  "\" --out \"" + dir.str("eval") + "\"");
    REQUIRE(eval.exit_code == 0);
    json report = json::parse(slurp(dir.str("eval/report.json")));
    CHECK(report.at("accuracy").get<double>() == 1.0);  // train set
  }

  SUBCASE("cross validation, stratified and grouped") {
    CliResult cv = run_cli(
        kCli, "cv --dataset \"" + dir.str("model/dataset.csv") +
                  "\" --folds 3 --trees 25 --seed 5 --out \"" +
                  dir.str("cv") + "\"");
    REQUIRE(cv.exit_code == 0);
    json out = json::parse(slurp(dir.str("cv/cv.json")));
    CHECK(out.at("fold_results").size() == 3);
    CHECK(out.at("grouped").get<bool>() == false);

    CliResult gcv = run_cli(
        kCli, "cv --dataset \"" + dir.str("model/dataset.csv") +
                  "\" --folds 3 --grouped --trees 25 --seed 5 --out \"" +
                  dir.str("gcv") + "\"");
    REQUIRE(gcv.exit_code == 0);
    json gout = json::parse(slurp(dir.str("gcv/cv.json")));
    CHECK(gout.at("grouped").get<bool>() == true);
    for (const auto& fold : gout.at("fold_results"))
      CHECK(fold.at("subjects").size() == 1);
  }

  SUBCASE("per-subject personalisation") {
    CliResult ps = run_cli(
        kCli, "per-subject --dataset \"" + dir.str("model/dataset.csv") +
                  "\" --trees 25 --seed 5 --out \"" + dir.str("ps") + "\"");
    REQUIRE(ps.exit_code == 0);
    json out = json::parse(slurp(dir.str("ps/per_subject.json")));
    CHECK(out.at("subjects").size() == 3);
  }

  SUBCASE("recompile matches the trained binary byte for byte") {
    CliResult comp = run_cli(
        kCli, "compile --model \"" + dir.str("model/model.json") +
                  "\" --audit-dataset \"" + dir.str("model/dataset.csv") +
                  "\" --out \"" + dir.str("comp") + "\"");
    REQUIRE(comp.exit_code == 0);
    CHECK(slurp(dir.str("comp/model.bin")) ==
          slurp(dir.str("model/model.bin")));
  }

  SUBCASE("streaming emits one line per stride") {
    CliResult stream = run_cli(
        kCli, "stream --model \"" + dir.str("model/model.bin") +
                  "\" --profile \"" + dir.str("data/subject0/profile.json") +
                  "\" --input \"" + dir.str("data/subject0/segment0.csv") +
                  "\" --pace fast");
    REQUIRE(stream.exit_code == 0);
    // 100 frames per segment: (100 - 60) / 10 + 1 = 5 classifications.
    CHECK(count_lines(stream.out) == 5);
    CHECK(stream.out.substr(0, 6) == "59000,");
    int fields = 1;
    for (char ch : stream.out.substr(0, stream.out.find('\n')))
      if (ch == ',') ++fields;
    CHECK(fields == 5);
  }

  SUBCASE("external predictions must cover every row exactly once") {
    std::ofstream preds(dir.str("preds.csv"));
    preds << "row_index,predicted_label\n0,0\n1,1\n";
    preds.close();
    CliResult eval = run_cli(
        kCli, "evaluate --dataset \"" + dir.str("model/dataset.csv") +
                  "\" --external-predictions \"" + dir.str("preds.csv") +
                  "\" --out \"" + dir.str("eval2") + "\"");
    CHECK(eval.exit_code == 2);
  }
}

TEST_CASE("reruns with the same seed produce identical artifacts") {
  TempDir dir("det");
  std::string args =
      "gen-data --preset default --subjects 2 --duration 240 --seed 123 "
      "--out \"";
  REQUIRE(run_cli(kCli, args + dir.str("a") + "\"").exit_code == 0);
  REQUIRE(run_cli(kCli, args + dir.str("b") + "\"").exit_code == 0);
  CHECK(slurp(dir.str("a/dataset.csv")) == slurp(dir.str("b/dataset.csv")));
  CHECK(slurp(dir.str("a/manifest.json")) ==
        slurp(dir.str("b/manifest.json")));
  CHECK(slurp(dir.str("a/subject1/segment2.csv")) ==
        slurp(dir.str("b/subject1/segment2.csv")));

  std::string train_args = "train --dataset \"" + dir.str("a/dataset.csv") +
                           "\" --trees 20 --seed 9 --out \"";
  REQUIRE(run_cli(kCli, train_args + dir.str("ma") + "\"").exit_code == 0);
  REQUIRE(run_cli(kCli, train_args + dir.str("mb") + "\"").exit_code == 0);
  CHECK(slurp(dir.str("ma/model.bin")) == slurp(dir.str("mb/model.bin")));
  CHECK(slurp(dir.str("ma/model.json")) == slurp(dir.str("mb/model.json")));
  CHECK(slurp(dir.str("ma/report.json")) ==
        slurp(dir.str("mb/report.json")));
}

TEST_CASE("config file fills unset flags and rejects unknown keys") {
  TempDir dir("cfg");
  {
    std::ofstream cfg(dir.str("good.json"));
    cfg << "{\"seed\": 4, \"subjects\": 2, \"duration\": 240.0}\n";
  }
  CliResult run = run_cli(kCli, "gen-data --config \"" + dir.str("good.json") +
                                    "\" --out \"" + dir.str("out") + "\"");
  REQUIRE(run.exit_code == 0);
  json resolved = json::parse(slurp(dir.str("out/run_config.json")));
  CHECK(resolved.at("seed").get<int>() == 4);
  CHECK(resolved.at("subjects").get<int>() == 2);

  {
    std::ofstream cfg(dir.str("bad.json"));
    cfg << "{\"not_a_key\": 1}\n";
  }
  CHECK(run_cli(kCli, "gen-data --config \"" + dir.str("bad.json") +
                          "\" --out \"" + dir.str("out2") + "\"")
            .exit_code == 1);

  {
    std::ofstream cfg(dir.str("wrong_type.json"));
    cfg << "{\"seed\": \"not-a-number\"}\n";
  }
  CHECK(run_cli(kCli, "gen-data --config \"" + dir.str("wrong_type.json") +
                          "\" --out \"" + dir.str("out3") + "\"")
            .exit_code == 1);
}

TEST_CASE("flags override config values") {
  TempDir dir("ovr");
  {
    std::ofstream cfg(dir.str("cfg.json"));
    cfg << "{\"seed\": 4}\n";
  }
  CliResult run =
      run_cli(kCli, "gen-data --preset solutions --config \"" +
                        dir.str("cfg.json") + "\" --seed 99 --out \"" +
                        dir.str("out") + "\"");
  REQUIRE(run.exit_code == 0);
  json resolved = json::parse(slurp(dir.str("out/run_config.json")));
  CHECK(resolved.at("seed").get<int>() == 99);
}

TEST_CASE("error classes map to exit codes") {
  TempDir dir("err");
  // Validation error: invalid band (high edge at Nyquist).
  CHECK(run_cli(kCli, "gen-data --preset default --subjects 2 "
                      "--band-high 0.5 --out \"" +
                          dir.str("x") + "\"")
            .exit_code == 1);
  // Data error: missing input file.
  CHECK(run_cli(kCli, "train --manifest \"" + dir.str("nope.json") +
                          "\" --out \"" + dir.str("y") + "\"")
            .exit_code == 2);
  // Data error: malformed stream input.
  {
    std::ofstream f(dir.str("bad_stream.csv"));
    f << "timestamp_ms,oops\n1,2\n";
  }
  TempDir model_dir("errmodel");
  REQUIRE(run_cli(kCli,
                  "gen-data --preset default --subjects 2 --duration 240 "
                  "--seed 3 --out \"" + model_dir.str("d") + "\"")
              .exit_code == 0);
  REQUIRE(run_cli(kCli, "train --dataset \"" + model_dir.str("d/dataset.csv") +
                            "\" --trees 12 --seed 3 --out \"" +
                            model_dir.str("m") + "\"")
              .exit_code == 0);
  CHECK(run_cli(kCli, "stream --model \"" + model_dir.str("m/model.bin") +
                          "\" --profile \"" +
                          model_dir.str("d/subject0/profile.json") +
                          "\" --input \"" + dir.str("bad_stream.csv") + "\"")
            .exit_code == 2);
}

TEST_CASE("quiet log level suppresses progress notes") {
  TempDir dir("log");
  CliResult quiet = run_cli(
      kCli, "gen-data --preset solutions --out \"" + dir.str("q") + "\"",
      "quiet");
  CHECK(quiet.err.empty());
  CliResult info = run_cli(
      kCli, "gen-data --preset solutions --out \"" + dir.str("i") + "\"",
      "info");
  CHECK(info.err.find("[hydrotrack]") != std::string::npos);
}
