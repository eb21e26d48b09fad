#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prunecoder {

/// Ids of the four special tokens within a vocabulary.
struct SpecialIds {
    std::int32_t pad = 0;
    std::int32_t unk = 1;
    std::int32_t cls = 2;
    std::int32_t sep = 3;
};

/// WordPiece vocabulary. Ids are dense line numbers. "[PAD]", "[UNK]", "[CLS]" and "[SEP]" must
/// each appear once; they may sit anywhere, as in hub vocabularies that start with [unused] slots.
class Vocab {
public:
    static constexpr const char* continuation_prefix = "##";

    /// Throws UsageError when a special token is missing or a token repeats.
    explicit Vocab(std::vector<std::string> tokens);

    /// One token per line; line number (0-based) is the id. Trailing '\r' is stripped.
    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// -1 when absent.
    std::int32_t find(std::string_view token) const;

    const SpecialIds& specials() const noexcept { return specials_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
    std::size_t max_token_bytes_ = 0;
    SpecialIds specials_;

    friend std::vector<std::int32_t> wordpiece_tokenize(std::string_view, const Vocab&);
};

/// Splits on Unicode whitespace without touching any other code point.
std::vector<std::string_view> split_whitespace(std::string_view text);

/// Greedy longest-match WordPiece without case folding. Pieces after the first in a word
/// carry the "##" prefix; a word that cannot be fully covered becomes one [UNK].
std::vector<std::int32_t> wordpiece_tokenize(std::string_view text, const Vocab& vocab);

struct EncodedExample {
    std::vector<std::int32_t> input_ids;
    std::vector<std::int32_t> attention_mask;
};

/// [CLS] tokens[:max_len-2] [SEP] then [PAD] up to max_len; mask is 1 over non-padding.
EncodedExample encode_tokens(const std::vector<std::int32_t>& tokens, std::size_t max_len,
                             const SpecialIds& specials = {});
EncodedExample encode_example(std::string_view text, const Vocab& vocab, std::size_t max_len);

/// Number of bytes in the UTF-8 sequence starting with `lead`, or 0 for a continuation byte.
int utf8_sequence_length(unsigned char lead);

}  // namespace prunecoder
