#include "text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "rng.hpp"

namespace cacgen {

namespace {

const char* kBosToken = "<bos>";
const char* kEosToken = "<eos>";
const char* kPadToken = "<pad>";

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

}  // namespace

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    Vocabulary v;
    if (!j.contains("tokens") || !j["tokens"].is_array())
        throw std::runtime_error("vocabulary: missing \"tokens\" array");
    v.embed_dim = j.value("embed_dim", 16);
    if (v.embed_dim < kHashedCoordsStart + 1)
        throw std::runtime_error("vocabulary: embed_dim must be at least " +
                                 std::to_string(kHashedCoordsStart + 1));
    v.seed = j.value("seed", uint64_t(0x5eedULL));
    v.id_to_token = {kBosToken, kEosToken, kPadToken};
    v.entries = {{kBosToken, 0}, {kEosToken, 1}, {kPadToken, 2}};
    for (const auto& t : j["tokens"]) {
        std::string tok = lowercase(t.get<std::string>());
        if (v.entries.count(tok)) continue;
        v.entries[tok] = int(v.id_to_token.size());
        v.id_to_token.push_back(tok);
    }
    if (j.contains("concepts")) {
        for (auto it = j["concepts"].begin(); it != j["concepts"].end(); ++it) {
            std::string name = lowercase(it.key());
            if (!v.entries.count(name))
                throw std::runtime_error("vocabulary: concept \"" + name +
                                         "\" is not in the token list");
            auto rgb = it.value();
            if (!rgb.is_array() || rgb.size() != 3)
                throw std::runtime_error("vocabulary: concept \"" + name +
                                         "\" color must be [r,g,b]");
            v.concept_palette[name] = {rgb[0].get<double>(), rgb[1].get<double>(),
                                       rgb[2].get<double>()};
        }
    }
    return v;
}

Vocabulary Vocabulary::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("vocabulary: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("vocabulary: " + path + ": " + e.what());
    }
    return from_json(j);
}

Vocabulary Vocabulary::builtin() {
    nlohmann::json j;
    j["embed_dim"] = 16;
    j["seed"] = 0x5eedULL;
    j["tokens"] = {
        "a", "an", "the", "and", "of", "in", "on", "with", "photo", "scene", "synthetic",
        "street", "two", "left", "right", "red", "green", "blue", "yellow", "cyan",
        "magenta", "orange", "white", "cube", "ball", "chair", "backpack", "car", "table",
        "dog", "cat", "tree", "sky", "road", "grass", "building", "water", "dining", "room",
        "cups"};
    j["concepts"] = {
        {"red", {1.0, 0.1, 0.1}},    {"green", {0.1, 0.85, 0.1}}, {"blue", {0.1, 0.2, 1.0}},
        {"yellow", {1.0, 0.9, 0.1}}, {"cyan", {0.1, 0.9, 0.9}},   {"magenta", {1.0, 0.1, 0.9}},
        {"orange", {1.0, 0.55, 0.1}}, {"white", {1.0, 1.0, 1.0}},
        {"sky", {0.45, 0.75, 1.0}},  {"road", {0.2, 0.2, 0.25}},  {"grass", {0.15, 0.7, 0.2}},
        {"building", {0.85, 0.6, 0.25}}, {"water", {0.1, 0.35, 0.85}}};
    return from_json(j);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = entries.find(token);
    if (it == entries.end()) throw std::runtime_error("unknown word \"" + token + "\"");
    return it->second;
}

const std::array<double, 3>* Vocabulary::palette_color(int id) const {
    if (id < 0 || id >= int(id_to_token.size())) return nullptr;
    auto it = concept_palette.find(id_to_token[size_t(id)]);
    return it == concept_palette.end() ? nullptr : &it->second;
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json j;
    j["embed_dim"] = embed_dim;
    j["seed"] = seed;
    std::vector<std::string> toks(id_to_token.begin() + 3, id_to_token.end());
    j["tokens"] = toks;
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [name, rgb] : concept_palette) c[name] = {rgb[0], rgb[1], rgb[2]};
    j["concepts"] = c;
    return j;
}

TokenizedPrompt tokenize(const std::string& text, const Vocabulary& vocab) {
    std::istringstream iss(text);
    std::vector<int> ids{vocab.bos_id};
    std::string word;
    while (iss >> word) ids.push_back(vocab.id_of(lowercase(word)));
    if (ids.size() == 1) throw std::runtime_error("tokenize: empty prompt");
    ids.push_back(vocab.eos_id);
    return TokenizedPrompt{std::move(ids)};
}

Matrix embed_tokens(const std::vector<int>& tokens, const Vocabulary& vocab) {
    Matrix e(int(tokens.size()), vocab.embed_dim);
    for (int i = 0; i < int(tokens.size()); ++i) {
        int id = tokens[size_t(i)];
        if (id == vocab.pad_id) continue;  // zero row
        if (const auto* rgb = vocab.palette_color(id)) {
            for (int c = 0; c < 3; ++c) e.at(i, kColorCoord + c) = (*rgb)[c] - 0.5;
            e.at(i, kConceptMassCoord) = 1.0;
        }
        Rng rng(mix_seed(vocab.seed, uint64_t(id)));
        for (int c = kHashedCoordsStart; c < vocab.embed_dim; ++c)
            e.at(i, c) = rng.unit_variance_uniform();
    }
    return e;
}

Matrix embed(const TokenizedPrompt& p, const Vocabulary& vocab) {
    return embed_tokens(p.tokens, vocab);
}

ConcatenatedPrompt concat_prompts(const TokenizedPrompt& caption,
                                  const std::vector<TokenizedPrompt>& regions, int pad_to,
                                  double lambda_caption, double lambda_region,
                                  bool lambda_on_special) {
    if (lambda_caption <= 0.0 || lambda_region <= 0.0)
        contract_violation("concat_prompts: lambdas must be positive");
    ConcatenatedPrompt out;
    out.tokens = caption.tokens;
    out.segments.push_back({0, caption.length()});
    out.lambdas.assign(size_t(caption.length()), lambda_caption);
    for (const auto& r : regions) {
        int start = int(out.tokens.size());
        out.tokens.insert(out.tokens.end(), r.tokens.begin(), r.tokens.end());
        out.segments.push_back({start, start + r.length()});
        for (int i = 0; i < r.length(); ++i) {
            bool special = i == 0 || i == r.length() - 1;  // BOS / EOS
            out.lambdas.push_back(special && !lambda_on_special ? lambda_caption
                                                                : lambda_region);
        }
    }
    int total = int(out.tokens.size());
    if (pad_to < total)
        contract_violation("concat_prompts: pad_to " + std::to_string(pad_to) +
                           " < total token count " + std::to_string(total));
    out.tokens.resize(size_t(pad_to), kPadId);
    return out;
}

std::optional<std::pair<int, int>> find_substring_span(const TokenizedPrompt& caption,
                                                       const TokenizedPrompt& region) {
    if (region.length() <= 2) return std::nullopt;
    auto begin = region.tokens.begin() + 1;
    auto end = region.tokens.end() - 1;  // strip BOS/EOS
    int n = int(end - begin);
    auto it = std::search(caption.tokens.begin(), caption.tokens.end(), begin, end);
    if (it == caption.tokens.end()) return std::nullopt;
    return std::make_pair(int(it - caption.tokens.begin()), n);
}

}  // namespace cacgen
