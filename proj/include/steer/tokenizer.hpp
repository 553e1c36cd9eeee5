#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "steer/error.hpp"
#include "steer/model.hpp"

namespace steer {

using TokenId = std::uint32_t;

struct TokenSequence {
  std::vector<TokenId> tokens;

  std::size_t length() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }

  void validate(const ModelSpec& spec) const {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] >= spec.vocab_size) {
        throw Error(ErrorCode::kInvalidArgument,
                    "token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                        " is outside the vocabulary (size " + std::to_string(spec.vocab_size) +
                        ")");
      }
    }
    if (tokens.size() > spec.max_context) {
      throw Error(ErrorCode::kContextOverflow,
                  "sequence of " + std::to_string(tokens.size()) +
                      " tokens exceeds max_context " + std::to_string(spec.max_context));
    }
  }
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenSequence encode(std::string_view text) const = 0;
  // Special tokens decode to nothing.
  virtual std::string decode(const std::vector<TokenId>& tokens) const = 0;
  virtual std::optional<TokenId> eos() const = 0;
  virtual std::size_t vocab_size() const = 0;
};

// One token per byte, plus BOS (256) and EOS (257).
class ByteTokenizer final : public Tokenizer {
 public:
  static constexpr TokenId kBos = 256;
  static constexpr TokenId kEos = 257;
  static constexpr std::size_t kVocabSize = 258;

  explicit ByteTokenizer(bool prepend_bos = false) : prepend_bos_(prepend_bos) {}

  TokenSequence encode(std::string_view text) const override {
    TokenSequence seq;
    seq.tokens.reserve(text.size() + 1);
    if (prepend_bos_) seq.tokens.push_back(kBos);
    for (unsigned char c : text) seq.tokens.push_back(c);
    return seq;
  }

  std::string decode(const std::vector<TokenId>& tokens) const override {
    std::string out;
    for (TokenId t : tokens) {
      if (t < 256) out.push_back(static_cast<char>(t));
    }
    return out;
  }

  std::optional<TokenId> eos() const override { return kEos; }
  std::size_t vocab_size() const override { return kVocabSize; }

 private:
  bool prepend_bos_;
};

}  // namespace steer
