#include "prunecoder/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "prunecoder/errors.hpp"

namespace prunecoder {

namespace {

constexpr std::array<std::string_view, 4> kSpecials{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

// Longest run of bytes treated as one word before it collapses to [UNK].
constexpr std::size_t kMaxWordBytes = 400;

// Decodes one code point at `pos`; malformed sequences decode as a single byte.
char32_t decode_at(std::string_view s, std::size_t pos, std::size_t& len) {
    const auto lead = static_cast<unsigned char>(s[pos]);
    const int n = utf8_sequence_length(lead);
    if (n <= 1 || pos + static_cast<std::size_t>(n) > s.size()) {
        len = 1;
        return lead;
    }
    char32_t cp = lead & (0x7f >> n);
    for (int i = 1; i < n; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + static_cast<std::size_t>(i)]);
        if ((b & 0xc0) != 0x80) {
            len = 1;
            return lead;
        }
        cp = (cp << 6) | (b & 0x3f);
    }
    len = static_cast<std::size_t>(n);
    return cp;
}

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d: case 0x20:
        case 0x85: case 0xa0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202f: case 0x205f: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200a;
    }
}

bool is_char_boundary(std::string_view s, std::size_t pos) {
    return pos == 0 || pos >= s.size() || (static_cast<unsigned char>(s[pos]) & 0xc0) != 0x80;
}

}  // namespace

int utf8_sequence_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead & 0xe0) == 0xc0) return 2;
    if ((lead & 0xf0) == 0xe0) return 3;
    if ((lead & 0xf8) == 0xf0) return 4;
    return 0;
}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw UsageError("vocabulary token " + std::to_string(i) + " is empty");
        if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
            throw UsageError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
        max_token_bytes_ = std::max(max_token_bytes_, tokens_[i].size());
    }
    std::array<std::int32_t*, 4> slots{&specials_.pad, &specials_.unk, &specials_.cls, &specials_.sep};
    for (std::size_t i = 0; i < kSpecials.size(); ++i) {
        const auto id = find(kSpecials[i]);
        if (id < 0) throw UsageError("vocabulary is missing the special token " + std::string(kSpecials[i]));
        *slots[i] = id;
    }
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    try {
        return Vocab(std::move(tokens));
    } catch (const UsageError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

std::int32_t Vocab::find(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? -1 : it->second;
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> words;
    std::size_t pos = 0, start = std::string_view::npos;
    while (pos < text.size()) {
        std::size_t len = 1;
        const char32_t cp = decode_at(text, pos, len);
        if (is_unicode_space(cp)) {
            if (start != std::string_view::npos) words.push_back(text.substr(start, pos - start));
            start = std::string_view::npos;
        } else if (start == std::string_view::npos) {
            start = pos;
        }
        pos += len;
    }
    if (start != std::string_view::npos) words.push_back(text.substr(start));
    return words;
}

std::vector<std::int32_t> wordpiece_tokenize(std::string_view text, const Vocab& vocab) {
    std::vector<std::int32_t> ids;
    std::string candidate;
    for (std::string_view word : split_whitespace(text)) {
        if (word.size() > kMaxWordBytes) {
            ids.push_back(vocab.specials().unk);
            continue;
        }
        std::vector<std::int32_t> pieces;
        std::size_t start = 0;
        bool ok = true;
        while (start < word.size()) {
            std::size_t end = std::min(word.size(), start + vocab.max_token_bytes_);
            std::int32_t match = -1;
            for (; end > start; --end) {
                if (!is_char_boundary(word, end)) continue;
                candidate.assign(start > 0 ? Vocab::continuation_prefix : "");
                candidate.append(word.substr(start, end - start));
                match = vocab.find(candidate);
                if (match >= 0) break;
            }
            if (match < 0) {
                ok = false;
                break;
            }
            pieces.push_back(match);
            start = end;
        }
        if (ok) {
            ids.insert(ids.end(), pieces.begin(), pieces.end());
        } else {
            ids.push_back(vocab.specials().unk);
        }
    }
    return ids;
}

EncodedExample encode_tokens(const std::vector<std::int32_t>& tokens, std::size_t max_len, const SpecialIds& specials) {
    if (max_len < 2) throw UsageError("max_len must be at least 2 to hold [CLS] and [SEP]");
    EncodedExample e;
    e.input_ids.assign(max_len, specials.pad);
    e.attention_mask.assign(max_len, 0);
    const std::size_t kept = std::min(tokens.size(), max_len - 2);
    e.input_ids[0] = specials.cls;
    std::copy_n(tokens.begin(), kept, e.input_ids.begin() + 1);
    e.input_ids[kept + 1] = specials.sep;
    std::fill_n(e.attention_mask.begin(), kept + 2, 1);
    return e;
}

EncodedExample encode_example(std::string_view text, const Vocab& vocab, std::size_t max_len) {
    return encode_tokens(wordpiece_tokenize(text, vocab), max_len, vocab.specials());
}

}  // namespace prunecoder
