#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sallm::python {

enum class TokenKind { Name, Number, String, Op, Newline };

struct Token {
    TokenKind kind;
    std::string text;  // source text, quotes and prefix included for strings
    int line = 1;
    // Strings only.
    bool fstring = false;
    std::string value;  // contents between the quotes, escapes left as written

    bool is_op(std::string_view op) const { return kind == TokenKind::Op && text == op; }
    bool is_name(std::string_view name) const { return kind == TokenKind::Name && text == name; }
    // f-string with at least one replacement field.
    bool interpolated() const;
};

// Tolerant tokenizer for Python source. Newline tokens mark logical line ends
// (never emitted inside brackets or after a backslash continuation); comments
// and blank lines produce nothing. Malformed input never throws: unterminated
// strings run to end of line (or end of input for triple quotes).
std::vector<Token> tokenize(std::string_view source);

// Token ranges between Newline tokens.
struct Statement {
    size_t begin = 0;
    size_t end = 0;  // exclusive
};
std::vector<Statement> split_statements(const std::vector<Token>& tokens);

}  // namespace sallm::python
