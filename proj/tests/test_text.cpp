#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "text.hpp"

using namespace cacgen;

namespace {

const Vocabulary& vocab() {
    static Vocabulary v = Vocabulary::builtin();
    return v;
}

}  // namespace

TEST_CASE("tokenize wraps in bos/eos") {
    auto p = tokenize("a dog", vocab());
    REQUIRE(p.length() == 4);
    CHECK(p.tokens.front() == kBosId);
    CHECK(p.tokens.back() == kEosId);
    CHECK(p.tokens[1] == vocab().id_of("a"));
    CHECK(p.tokens[2] == vocab().id_of("dog"));
}

TEST_CASE("tokenize rejects empty and unknown words") {
    CHECK_THROWS_AS(tokenize("", vocab()), std::runtime_error);
    CHECK_THROWS_WITH_AS(tokenize("a zorble", vocab()), "unknown word \"zorble\"",
                         std::runtime_error);
}

TEST_CASE("tokenize folds case") {
    auto a = tokenize("Red CAT", vocab());
    auto b = tokenize("red cat", vocab());
    CHECK(a.tokens == b.tokens);
}

TEST_CASE("embed is deterministic and local") {
    auto p = tokenize("a red dog", vocab());
    Matrix e1 = embed(p, vocab());
    Matrix e2 = embed(p, vocab());
    CHECK(e1.data == e2.data);

    auto q = tokenize("a red cat", vocab());
    Matrix e3 = embed(q, vocab());
    for (int i = 0; i < e1.rows; ++i) {
        bool same_token = p.tokens[size_t(i)] == q.tokens[size_t(i)];
        bool rows_equal = true;
        for (int c = 0; c < e1.cols; ++c)
            if (e1.at(i, c) != e3.at(i, c)) rows_equal = false;
        CHECK(rows_equal == same_token);
    }
}

TEST_CASE("embed zero pad row and concept color coords") {
    Matrix e = embed_tokens({kPadId}, vocab());
    for (double v : e.data) CHECK(v == 0.0);

    Matrix r = embed_tokens({vocab().id_of("red")}, vocab());
    const auto& rgb = vocab().concept_palette.at("red");
    for (int c = 0; c < 3; ++c) CHECK(r.at(0, kColorCoord + c) == rgb[size_t(c)] - 0.5);
    CHECK(r.at(0, kConceptMassCoord) == 1.0);

    Matrix plain = embed_tokens({vocab().id_of("dog")}, vocab());
    for (int c = 0; c < kHashedCoordsStart; ++c) CHECK(plain.at(0, c) == 0.0);
}

TEST_CASE("concat_prompts layout and lambdas") {
    auto caption = tokenize("a dog", vocab());
    auto region = tokenize("cat", vocab());
    auto cp = concat_prompts(caption, {region}, 7, 1.0, 10.0);
    REQUIRE(cp.tokens.size() == 7);
    CHECK(cp.segments == std::vector<std::pair<int, int>>{{0, 4}, {4, 7}});
    CHECK(cp.lambdas == std::vector<double>{1, 1, 1, 1, 1, 10, 1});
    CHECK(cp.tokens[4] == kBosId);
    CHECK(cp.tokens[6] == kEosId);
}

TEST_CASE("concat_prompts zero regions and padding") {
    auto caption = tokenize("a dog", vocab());
    auto cp = concat_prompts(caption, {}, 6, 1.0, 10.0);
    CHECK(cp.segments.size() == 1);
    CHECK(cp.unpadded_len() == 4);
    CHECK(cp.tokens[4] == kPadId);
    CHECK(cp.tokens[5] == kPadId);
    CHECK_THROWS_AS(concat_prompts(caption, {}, 3, 1.0, 10.0), std::invalid_argument);
}

TEST_CASE("concat_prompts lambda_on_special flag") {
    auto caption = tokenize("a dog", vocab());
    auto region = tokenize("cat", vocab());
    auto cp = concat_prompts(caption, {region}, 7, 1.0, 10.0, true);
    CHECK(cp.lambdas == std::vector<double>{1, 1, 1, 1, 10, 10, 10});
}

TEST_CASE("segments tile the unpadded range") {
    auto caption = tokenize("a photo of a scene", vocab());
    std::vector<TokenizedPrompt> regions = {tokenize("red dog", vocab()),
                                            tokenize("blue cat", vocab())};
    auto cp = concat_prompts(caption, regions, 20, 1.0, 10.0);
    int expect = caption.length();
    for (const auto& r : regions) expect += r.length();
    CHECK(cp.unpadded_len() == expect);
    CHECK(int(cp.lambdas.size()) == expect);
    for (size_t i = 1; i < cp.segments.size(); ++i)
        CHECK(cp.segments[i].first == cp.segments[i - 1].second);
}

TEST_CASE("find_substring_span") {
    auto caption = tokenize("a photo of a dining table", vocab());
    auto region = tokenize("dining table", vocab());
    auto span = find_substring_span(caption, region);
    REQUIRE(span.has_value());
    CHECK(span->first == 5);
    CHECK(span->second == 2);

    CHECK_FALSE(find_substring_span(caption, tokenize("cat", vocab())).has_value());

    auto full = find_substring_span(caption, tokenize("a photo of a dining table", vocab()));
    REQUIRE(full.has_value());
    CHECK(full->first == 1);
    CHECK(full->second == caption.length() - 2);
}

TEST_CASE("vocabulary json round trip and validation") {
    nlohmann::json j = vocab().to_json();
    Vocabulary v2 = Vocabulary::from_json(j);
    CHECK(v2.entries == vocab().entries);
    CHECK(v2.concept_palette == vocab().concept_palette);

    nlohmann::json bad = {{"tokens", {"a"}}, {"concepts", {{"dog", {1, 0, 0}}}}};
    CHECK_THROWS_AS(Vocabulary::from_json(bad), std::runtime_error);
}
