#ifndef CACGEN_TEXT_HPP
#define CACGEN_TEXT_HPP

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "numerics.hpp"

#include "json.hpp"

namespace cacgen {

// Reserved ids; every vocabulary uses this layout.
constexpr int kBosId = 0;
constexpr int kEosId = 1;
constexpr int kPadId = 2;

// Toy word-level vocabulary standing in for a pretrained text encoder.
// Ids are dense: 0/1/2 are reserved for <bos>/<eos>/<pad>, the word list
// fills the rest. Concept words additionally map to a palette color that the
// painter denoiser can read back out of the embeddings.
struct Vocabulary {
    std::map<std::string, int> entries;
    std::vector<std::string> id_to_token;
    int embed_dim = 16;
    int bos_id = kBosId;
    int eos_id = kEosId;
    int pad_id = kPadId;
    std::map<std::string, std::array<double, 3>> concept_palette;
    uint64_t seed = 0;

    static Vocabulary from_json(const nlohmann::json& j);
    static Vocabulary from_json_file(const std::string& path);
    static Vocabulary builtin();

    int id_of(const std::string& token) const;
    bool is_special(int id) const { return id == bos_id || id == eos_id || id == pad_id; }
    // palette color of a concept token, nullptr otherwise
    const std::array<double, 3>* palette_color(int id) const;
    nlohmann::json to_json() const;
};

struct TokenizedPrompt {
    std::vector<int> tokens;  // starts with BOS, ends with EOS

    int length() const { return int(tokens.size()); }
};

// y0 (+) y1 (+) ... (+) ym with per-segment spans and per-token weights.
struct ConcatenatedPrompt {
    std::vector<int> tokens;                       // padded with PAD at the tail
    std::vector<std::pair<int, int>> segments;     // half-open, segment 0 = caption
    std::vector<double> lambdas;                   // length = unpadded token count

    int unpadded_len() const { return segments.empty() ? 0 : segments.back().second; }
    int padded_len() const { return int(tokens.size()); }
};

// Embedding layout: coords 0..2 hold (rgb - 0.5) for concept tokens (zero
// otherwise), coord 3 is a concept indicator, coords 4.. are seeded
// unit-variance hash values per token id. PAD embeds to the zero row.
constexpr int kColorCoord = 0;
constexpr int kConceptMassCoord = 3;
constexpr int kHashedCoordsStart = 4;

TokenizedPrompt tokenize(const std::string& text, const Vocabulary& vocab);
Matrix embed_tokens(const std::vector<int>& tokens, const Vocabulary& vocab);
Matrix embed(const TokenizedPrompt& p, const Vocabulary& vocab);

// Region BOS/EOS keep lambda_caption unless lambda_on_special is set; special
// tokens are treated as global context like the caption itself.
ConcatenatedPrompt concat_prompts(const TokenizedPrompt& caption,
                                  const std::vector<TokenizedPrompt>& regions, int pad_to,
                                  double lambda_caption, double lambda_region,
                                  bool lambda_on_special = false);

// First occurrence of the region's content tokens inside the caption token
// sequence; (start index, length) over the caption axis, BOS included in the
// indexing.
std::optional<std::pair<int, int>> find_substring_span(const TokenizedPrompt& caption,
                                                       const TokenizedPrompt& region);

}  // namespace cacgen

#endif
