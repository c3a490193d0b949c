#include "support.hpp"

#include <gtest/gtest.h>

using namespace gc_test;

namespace {

std::string text_of(const ExampleBlock& b) {
    std::string out;
    for (const auto& p : b.parts) {
        if (const auto* t = std::get_if<TextPart>(&p)) {
            out += t->text + "\n";
        }
    }
    return out;
}

std::size_t images_of(const ExampleBlock& b) {
    std::size_t n = 0;
    for (const auto& p : b.parts) {
        n += std::holds_alternative<ImagePart>(p);
    }
    return n;
}

} // namespace

TEST(Store, LoadsFixture) {
    const ExemplarStore& s = fixture_store();
    ASSERT_EQ(s.records().size(), 3u);
    EXPECT_EQ(s.records()[0].id, "ex_signin");
    EXPECT_EQ(s.records()[0].comments.size(), 3u);
    EXPECT_FALSE(s.records()[0].comments[2].valid);
    for (const auto& r : s.records()) {
        EXPECT_TRUE(r.joint_vector);
        EXPECT_EQ(r.comment_vectors.size(), r.comments.size());
    }
    EXPECT_THROW(s.require_disjoint({"ex_feed"}), InvalidArgument);
    EXPECT_NO_THROW(s.require_disjoint({"ui_signin"}));
}

TEST(Store, EmptyFileIsValid) {
    TempDir dir("store");
    write_text_file(dir / "empty.jsonl", "");
    EXPECT_TRUE(load_exemplar_store(dir / "empty.jsonl", hash_embedder()).empty());
}

TEST(Store, ReversedBoxNamesTheLine) {
    TempDir dir("store");
    fs::copy_file(data_path("ui_signin.png"), dir / "s.png");
    write_text_file(dir / "bad.jsonl",
                    "{\"id\":\"a\",\"image\":\"s.png\",\"comments\":[]}\n"
                    "{\"id\":\"b\",\"image\":\"s.png\",\"comments\":[{\"text\":\"t\",\"box\":[3,9,1,2]}]}\n");
    try {
        load_exemplar_store(dir / "bad.jsonl", hash_embedder());
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    write_text_file(dir / "dup.jsonl",
                    "{\"id\":\"a\",\"image\":\"s.png\",\"comments\":[]}\n"
                    "{\"id\":\"a\",\"image\":\"s.png\",\"comments\":[]}\n");
    EXPECT_THROW(load_exemplar_store(dir / "dup.jsonl", hash_embedder()), SchemaError);
}

TEST(Store, PrecomputedVectorsOverrideTheEmbedder) {
    TempDir dir("store");
    fs::copy_file(data_path("ui_signin.png"), dir / "s.png");
    write_text_file(dir / "x.jsonl",
                    "{\"id\":\"a\",\"image\":\"s.png\",\"comments\":[{\"text\":\"t\",\"box\":[0,0,1,1]}]}\n");
    write_text_file(dir / "v.tsv", "a\t1 0\na#0\t0 1\n");
    const auto s = load_exemplar_store(dir / "x.jsonl", hash_embedder(), {}, (dir / "v.tsv").string());
    EXPECT_EQ(*s.records()[0].joint_vector, (Vector{1, 0}));
    EXPECT_EQ(*s.records()[0].comment_vectors[0], (Vector{0, 1}));
}

TEST(JointSelection, OrderMatchesIndependentSort) {
    const ExemplarStore& s = fixture_store();
    EXPECT_TRUE(select_by_joint_similarity(s, signin_image(), "ui", 0).empty());
    const auto picked = select_by_joint_similarity(s, signin_image(), "sign in", 3);
    ASSERT_EQ(picked.size(), 3u);
    const Vector q = HashEmbedder().embed_joint(signin_image(), "sign in");
    std::vector<std::pair<double, std::string>> oracle;
    for (const auto& r : s.records()) {
        oracle.emplace_back(-naive_cos(q, *r.joint_vector), r.id);
    }
    std::sort(oracle.begin(), oracle.end());
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(picked[i]->id, oracle[i].second);
    }
}

TEST(JointSelection, IdenticalVectorRanksFirst) {
    const ExemplarStore& s = fixture_store();
    const auto& feed = s.records()[1];
    const auto picked = select_by_joint_similarity(s, *feed.image, feed.task, 1);
    ASSERT_EQ(picked.size(), 1u);
    EXPECT_EQ(picked[0]->id, "ex_feed");
}

TEST(TextSelection, IdenticalCommentFirstAndInvalidSkipped) {
    const ExemplarStore& s = fixture_store();
    const std::string& target = s.records()[2].comments[1].text;
    const auto m = select_by_text_similarity(s, target, 100);
    ASSERT_EQ(m.size(), 6u); // 8 comments, 2 marked invalid
    EXPECT_EQ(m[0].comment().text, target);
    for (std::size_t i = 1; i < m.size(); ++i) {
        EXPECT_GE(m[i - 1].score, m[i].score);
        EXPECT_TRUE(m[i].comment().valid);
    }
    EXPECT_TRUE(select_by_text_similarity(s, target, 0).empty());
}

TEST(TextGenExamples, OneBlockPerRecordWithValidCommentsOnly) {
    const ExemplarStore& s = fixture_store();
    const auto ex = build_textgen_examples({&s.records()[0], &s.records()[1]});
    EXPECT_EQ(ex.example_count, 2u);
    ASSERT_EQ(ex.blocks.size(), 2u);
    const auto back = parse_comment_list(ex.blocks[0].expected_output);
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(ex.blocks[0].expected_output.find("saturated"), std::string::npos);
    EXPECT_EQ(images_of(ex.blocks[0]), 1u);
}

TEST(FilterExamples, InjectionPositions) {
    auto fe = make_filter_example({"v0", "v1"}, {}, {});
    EXPECT_EQ(fe.expected, (std::vector<std::pair<int, bool>>{{0, true}, {1, true}}));
    fe = make_filter_example({"v0", "v1"}, {"bad"}, {1});
    EXPECT_EQ(fe.items, (std::vector<std::string>{"v0", "bad", "v1"}));
    EXPECT_EQ(fe.expected, (std::vector<std::pair<int, bool>>{{0, true}, {1, false}, {2, true}}));
    EXPECT_THROW(make_filter_example({"v"}, {"x"}, {}), InvalidArgument);
}

TEST(FilterExamples, ExpectedOutputParsesBackAndMarksInjected) {
    const ExemplarStore& s = fixture_store();
    const std::vector<const ExemplarRecord*> sel{&s.records()[0], &s.records()[2]};
    const auto pool = collect_invalid_pool(s, sel);
    // Marked-invalid comment of ex_signin first, then all three of ex_feed.
    ASSERT_EQ(pool.size(), 4u);
    EXPECT_NE(pool[0].find("saturated"), std::string::npos);
    Rng rng(5);
    const auto ex = build_filter_examples(sel, pool, 2, rng);
    ASSERT_EQ(ex.blocks.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t n_valid = valid_comment_texts(*sel[i]).size();
        const auto verdicts = parse_filter_verdicts(ex.blocks[i].expected_output, static_cast<int>(n_valid + 2));
        EXPECT_EQ(std::count_if(verdicts.begin(), verdicts.end(), [](auto& v) { return !v.second; }), 2);
    }
    EXPECT_THROW(build_filter_examples(sel, {}, 1, rng), InvalidArgument);
    EXPECT_NO_THROW(build_filter_examples(sel, {}, 0, rng));
}

TEST(BoxGenExamples, OutputIsTheStoredBox) {
    const ExemplarStore& s = fixture_store();
    const auto m = select_by_text_similarity(s, "button contrast", 2);
    const auto ex = build_boxgen_examples(m, VisualContext{});
    ASSERT_EQ(ex.blocks.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(parse_box(ex.blocks[i].expected_output, GridSpace{}), m[i].comment().box);
        EXPECT_EQ(images_of(ex.blocks[i]), 1u);
    }
}

TEST(BoxRefineTrace, EndsWithSentinelAndChainsBoxes) {
    const ExemplarStore& s = fixture_store();
    const auto& r = s.records()[0];
    std::set<std::size_t> lengths;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const auto ex = build_box_refine_trace(*r.image, r.comments[0].text, r.comments[0].box, {4, 0},
                                               VisualContext{}, rng);
        ASSERT_FALSE(ex.blocks.empty());
        lengths.insert(ex.blocks.size());
        EXPECT_EQ(ex.blocks.back().expected_output, kBoxAcceptSentinel);
        // The candidate shown at the last step is the exemplar's own box.
        EXPECT_NE(text_of(ex.blocks.back()).find("candidate: " + format_box(r.comments[0].box)),
                  std::string::npos);
        for (std::size_t i = 0; i + 1 < ex.blocks.size(); ++i) {
            const GridBox next = parse_box(ex.blocks[i].expected_output, GridSpace{});
            EXPECT_NE(text_of(ex.blocks[i + 1]).find("candidate: " + format_box(next)), std::string::npos);
        }
        EXPECT_EQ(images_of(ex.blocks[0]), 2u);
    }
    EXPECT_GT(lengths.size(), 2u);
}

TEST(TextRefineTrace, DistractorsByAscendingSimilarityThenTarget) {
    const HashEmbedder e;
    const std::string target = "the sign in button text is too pale to read";
    const std::vector<std::string> pool{"button text is pale", "list spacing is uneven", "the sign in button is pale"};
    const auto seq = order_text_refinement(target, pool, 3, e);
    ASSERT_EQ(seq.size(), 4u);
    EXPECT_EQ(seq.back(), target);
    for (std::size_t i = 0; i + 2 < seq.size(); ++i) {
        EXPECT_LE(naive_cos(e.embed_text(target), e.embed_text(seq[i])),
                  naive_cos(e.embed_text(target), e.embed_text(seq[i + 1])));
    }
    const auto one = order_text_refinement(target, pool, 1, e);
    EXPECT_EQ(one, (std::vector<std::string>{pool[0], target}));
    EXPECT_THROW(order_text_refinement(target, {}, 1, e), InvalidArgument);
    EXPECT_THROW(order_text_refinement(target, pool, 0, e), InvalidArgument);

    const auto ex = build_text_refine_trace(target, pool, 2, e);
    ASSERT_EQ(ex.blocks.size(), 3u);
    EXPECT_EQ(ex.blocks.back().expected_output, kCommentAcceptSentinel);
    EXPECT_EQ(ex.blocks[1].expected_output, target);
}

TEST(ValidationExamples, OneBlockPerVerdictClass) {
    const ExemplarStore& s = fixture_store();
    const auto m = select_by_text_similarity(s, "button contrast", 1);
    Rng rng(2);
    const auto ex = build_validation_examples(m, {"a foreign comment"}, rng, VisualContext{});
    ASSERT_EQ(ex.blocks.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(ex.blocks[i].expected_output, verdict_label(kAllVerdicts[i]));
        EXPECT_EQ(images_of(ex.blocks[i]), 2u);
    }
    // Comment-wrong blocks show a different comment than the correct ones.
    EXPECT_NE(text_of(ex.blocks[0]), text_of(ex.blocks[1]));
    EXPECT_EQ(text_of(ex.blocks[0]), text_of(ex.blocks[2]));
}

TEST(ValidationExamples, CustomPerturberForDetectionLabels) {
    const ExemplarStore& s = fixture_store();
    const auto m = select_by_text_similarity(s, "button contrast", 1);
    Rng rng(2);
    const auto ex = build_validation_examples(
        m, {}, rng, VisualContext{}, [](const std::string& t, Rng&) { return t + " (wrong)"; });
    EXPECT_NE(text_of(ex.blocks[1]).find("(wrong)"), std::string::npos);
    EXPECT_THROW(build_validation_examples({}, {}, rng, VisualContext{}), InvalidArgument);
}

TEST(ValidationExamples, WideBoxStillGetsAWrongBox) {
    // (1, 11.5, 8, 12.75) has no legal candidate at frac 1.
    const ExemplarStore& s = fixture_store();
    std::vector<CommentMatch> m{{&s.records()[0], 0, 1.0}};
    const GridBox box = m[0].comment().box;
    EXPECT_TRUE(remove_invalid_perturbed(perturb_candidates(box, 1.0, GridSpace{}), box, 1.0, GridSpace{}).empty());
    Rng rng(4);
    const auto ex = build_validation_examples(m, {}, rng, VisualContext{});
    EXPECT_EQ(ex.blocks.size(), 4u);
}
