#include "support.hpp"

#include <groundcrit/cli.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace gc_test;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "groundcrit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> critique_args(const fs::path& out_dir, const std::string& transcript) {
    return {"critique",
            "--image", data_path("ui_signin.png").string(),
            "--guidelines", data_path("guidelines.txt").string(),
            "--fewshot-db", data_path("exemplars/exemplars.jsonl").string(),
            "--backend", "scripted",
            "--transcript", data_path(transcript).string(),
            "--task", "sign in screen",
            "--out-dir", out_dir.string()};
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

} // namespace

TEST(CliCritique, CanonicalRunWritesArtifacts) {
    TempDir dir("cli");
    const auto r = invoke(critique_args(dir / "run", "canonical_transcript.jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("calls total: 8"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("emitted 2"), std::string::npos);
    for (const char* f : {"manifest.json", "report.json", "transcript.jsonl", "annotated.png"}) {
        EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
    }
    const ojson report = ojson::parse(slurp(dir / "run" / "report.json"));
    EXPECT_TRUE(check_report_schema(report).empty());
    const RasterImage annotated = read_png(dir / "run" / "annotated.png");
    EXPECT_EQ(annotated.width(), signin_image().width());
}

TEST(CliCritique, TwoExecutionsAreByteIdentical) {
    TempDir dir("cli");
    ASSERT_EQ(invoke(critique_args(dir / "a", "canonical_transcript.jsonl")).code, 0);
    ASSERT_EQ(invoke(critique_args(dir / "b", "canonical_transcript.jsonl")).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
    EXPECT_EQ(slurp(dir / "a" / "annotated.png"), slurp(dir / "b" / "annotated.png"));
    EXPECT_EQ(slurp(dir / "a" / "transcript.jsonl"), slurp(dir / "b" / "transcript.jsonl"));
}

TEST(CliCritique, ReplayFromManifestReproducesReport) {
    TempDir dir("cli");
    ASSERT_EQ(invoke(critique_args(dir / "a", "canonical_transcript.jsonl")).code, 0);
    const auto r = invoke({"critique", "--replay", (dir / "a" / "manifest.json").string(), "--out-dir",
                        (dir / "b").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
    EXPECT_EQ(slurp(dir / "a" / "annotated.png"), slurp(dir / "b" / "annotated.png"));
}

TEST(CliCritique, AblationFlagsChangeCallCounts) {
    TempDir dir("cli");
    // Same transcript minus its Validation replies.
    std::istringstream in(slurp(data_path("canonical_transcript.jsonl")));
    std::string line, kept;
    while (std::getline(in, line)) {
        if (line.find("Design Comment:") == std::string::npos) kept += line + "\n";
    }
    write_text_file(dir / "t.jsonl", kept);
    auto args = critique_args(dir / "run", "canonical_transcript.jsonl");
    args[10] = (dir / "t.jsonl").string();
    args.push_back("--no-validation");
    const auto r = invoke(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("calls Validation: 0"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("calls total: 6"), std::string::npos) << r.out;
    const ojson m = ojson::parse(slurp(dir / "run" / "manifest.json"));
    EXPECT_EQ(m["config"]["validation_on"], "false");
}

TEST(CliCritique, GroundOnly) {
    TempDir dir("cli");
    auto args = critique_args(dir / "run", "ground_only_transcript.jsonl");
    args.insert(args.end(), {"--ground-only", "--comment", "The sign-in button is hard to read."});
    const auto r = invoke(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("calls TextGen: 0"), std::string::npos);
    const ojson report = ojson::parse(slurp(dir / "run" / "report.json"));
    EXPECT_EQ(box_from_json(report["items"][0]["box"]), (GridBox{1, 11.5, 8, 12.75}));
}

TEST(CliCritique, UsageErrorsExitTwo) {
    TempDir dir("cli");
    EXPECT_EQ(invoke({"critique", "--out-dir", (dir / "x").string(), "--backend", "scripted"}).code, 2);
    auto args = critique_args(dir / "run", "canonical_transcript.jsonl");
    args.insert(args.end(), {"--comment", "only with ground-only"});
    EXPECT_EQ(invoke(args).code, 2);
    EXPECT_EQ(invoke({"critique", "--image", "a.png", "--out-dir", "x", "--backend", "http", "--transcript", "t"}).code,
              2);
    EXPECT_EQ(invoke({"critique", "--bogus"}).code, 2);
    EXPECT_EQ(invoke({}).code, 2);
    EXPECT_EQ(invoke({"--help"}).code, 0);
}

TEST(CliCritique, MissingCredentialIsAConfigurationError) {
    TempDir dir("cli");
    ::unsetenv("GROUNDCRIT_TEST_NO_SUCH_KEY");
    const auto r = invoke({"critique", "--image", data_path("ui_signin.png").string(), "--backend", "http",
                        "--endpoint", "http://127.0.0.1:9", "--model", "m", "--credential-env",
                        "GROUNDCRIT_TEST_NO_SUCH_KEY", "--out-dir", (dir / "run").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("GROUNDCRIT_TEST_NO_SUCH_KEY"), std::string::npos) << r.err;
}

TEST(CliCritique, ExhaustedTranscriptAbortsWithPartialReport) {
    TempDir dir("cli");
    const auto t = dir / "short.jsonl";
    const std::string full = slurp(data_path("canonical_transcript.jsonl"));
    // Keep the first three entries: TextGen, TextFilter, first BoxGen.
    std::istringstream in(full);
    std::string line, head;
    for (int i = 0; i < 3 && std::getline(in, line); ++i) head += line + "\n";
    write_text_file(t, head);
    auto args = critique_args(dir / "run", "canonical_transcript.jsonl");
    args[10] = t.string();
    const auto r = invoke(args);
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_TRUE(fs::exists(dir / "run" / "report.partial.json"));
    EXPECT_FALSE(fs::exists(dir / "run" / "report.json"));
}

TEST(CliEvaluate, CritiqueAndDetection) {
    TempDir dir("cli");
    ASSERT_EQ(invoke(critique_args(dir / "run", "canonical_transcript.jsonl")).code, 0);
    const auto r = invoke({"evaluate", "--pred", (dir / "run" / "report.json").string(), "--dataset",
                        data_path("critique_gt.jsonl").string(), "--out", (dir / "eval.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const ojson e = ojson::parse(slurp(dir / "eval.json"));
    EXPECT_EQ(e["estimated_iou"], 1.0);
    EXPECT_EQ(e["map_ovd"], nullptr);

    EXPECT_EQ(invoke({"evaluate", "--pred", (dir / "run" / "report.json").string(), "--dataset",
                   data_path("critique_gt.jsonl").string(), "--mode", "ovad", "--metrics", "similarity"})
                  .code,
              2);

    // A detection report copied from the signin ground truth.
    const auto gt = load_detection_dataset(data_path("detection_gt.jsonl"));
    ojson items = ojson::array();
    ojson report = ojson::parse(slurp(dir / "run" / "report.json"));
    for (std::size_t i = 0; i < gt.images[0].objects.size(); ++i) {
        const auto& o = gt.images[0].objects[i];
        ojson it = report["items"][0];
        it["id"] = i;
        it["comment"] = format_detection_label({o.category, o.attributes});
        it["box"] = box_to_json(o.box);
        items.push_back(it);
    }
    report["items"] = items;
    const std::string errs = check_report_schema(report).empty() ? "" : check_report_schema(report).front();
    ASSERT_TRUE(errs.empty()) << errs;
    write_text_file(dir / "det.json", dump_document(report));
    const auto d = invoke({"evaluate", "--pred", (dir / "det.json").string(), "--dataset",
                        data_path("detection_gt.jsonl").string(), "--mode", "ovd", "--out",
                        (dir / "det_eval.json").string()});
    ASSERT_EQ(d.code, 0) << d.err;
    const ojson de = ojson::parse(slurp(dir / "det_eval.json"));
    // Only the signin image was predicted; feed-only categories lose recall.
    double expect = 0;
    for (const auto& c : compute_map({report_detections(report)}, gt, MapMode::OVD).per_category) {
        if (c.ap) expect += *c.ap;
    }
    EXPECT_NEAR(de["map_ovd"].get<double>(), 100.0 * expect / 4.0, 1e-9);
}

TEST(CliRender, GoldenChecksumsAndBadBox) {
    TempDir dir("cli");
    const auto r = invoke({"render", "--image", data_path("ui_signin.png").string(), "--mode", "axes", "--out",
                        (dir / "axes.png").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto manifest = read_golden_manifest();
    EXPECT_EQ(r.out.substr(0, 16), manifest.at("signin_axes"));
    const auto p = invoke({"render", "--image", data_path("ui_signin.png").string(), "--mode", "patch", "--box",
                        "1,11.5,8,12.75", "--out", (dir / "patch.png").string()});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_EQ(p.out.substr(0, 16), manifest.at("signin_patch"));
    EXPECT_EQ(invoke({"render", "--image", data_path("ui_signin.png").string(), "--mode", "patch", "--box", "3,9,1,2",
                   "--out", (dir / "x.png").string()})
                  .code,
              2);
    EXPECT_EQ(invoke({"render", "--image", data_path("ui_signin.png").string(), "--mode", "patch", "--box", "1,2,3",
                   "--out", (dir / "x.png").string()})
                  .code,
              2);
}

TEST(CliSnap, SnapsToDomAndKeepsUnmatched) {
    TempDir dir("cli");
    ASSERT_EQ(invoke(critique_args(dir / "run", "canonical_transcript.jsonl")).code, 0);
    const auto s = invoke({"snap", "--pred", (dir / "run" / "report.json").string(), "--dom",
                        data_path("dom_signin.json").string(), "--out", (dir / "snapped.json").string()});
    ASSERT_EQ(s.code, 0) << s.err;
    const ojson before = ojson::parse(slurp(dir / "run" / "report.json"));
    const ojson after = ojson::parse(slurp(dir / "snapped.json"));
    const auto dom = load_dom(data_path("dom_signin.json"));
    for (std::size_t i = 0; i < after["items"].size(); ++i) {
        const GridBox a = box_from_json(before["items"][i]["box"]);
        const GridBox b = box_from_json(after["items"][i]["box"]);
        EXPECT_EQ(b, snap_to_dom(a, dom));
    }
    // Snapping a snapped report changes nothing.
    ASSERT_EQ(invoke({"snap", "--pred", (dir / "snapped.json").string(), "--dom", data_path("dom_signin.json").string(),
                   "--out", (dir / "again.json").string()})
                  .code,
              0);
    EXPECT_EQ(slurp(dir / "snapped.json"), slurp(dir / "again.json"));
    EXPECT_EQ(invoke({"snap", "--pred", (dir / "snapped.json").string(), "--dom", data_path("dom_signin.json").string(),
                   "--out", (dir / "x.json").string(), "--min-iou", "1.5"})
                  .code,
              2);
}
