#include "sallm/python_lexer.hpp"

#include <array>
#include <cctype>

namespace sallm::python {

namespace {

constexpr std::array<std::string_view, 25> kMultiOps = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "+=", "-=",
    "*=",  "/=",  "%=",  "&=",  "|=",  "^=", "@=", "**", "//", "<<", ">>", "<>"};

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view s) {
    if (s.empty() || s.size() > 2) return false;
    for (char c : s) {
        switch (std::tolower(static_cast<unsigned char>(c))) {
            case 'r': case 'b': case 'u': case 'f': break;
            default: return false;
        }
    }
    return true;
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        while (pos_ < src_.size()) {
            const unsigned char c = static_cast<unsigned char>(src_[pos_]);
            if (c == '\n') {
                if (depth_ == 0) emit_newline();
                ++line_;
                ++pos_;
            } else if (c == '\\' && peek(1) == '\n') {
                pos_ += 2;
                ++line_;
            } else if (c == '\\' && peek(1) == '\r' && peek(2) == '\n') {
                pos_ += 3;
                ++line_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
            } else if (c == '"' || c == '\'') {
                lex_string(pos_, "");
            } else if (is_name_start(c)) {
                lex_name();
            } else if (std::isdigit(c) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
                lex_number();
            } else {
                lex_op();
            }
        }
        emit_newline();
        return std::move(tokens_);
    }

private:
    char peek(size_t ahead) const { return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0'; }

    void emit_newline() {
        if (!tokens_.empty() && tokens_.back().kind != TokenKind::Newline) {
            tokens_.push_back({TokenKind::Newline, "", line_});
        }
    }

    void lex_name() {
        const size_t start = pos_;
        while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        std::string_view word = src_.substr(start, pos_ - start);
        if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') && is_string_prefix(word)) {
            lex_string(start, word);
            return;
        }
        tokens_.push_back({TokenKind::Name, std::string(word), line_});
    }

    void lex_number() {
        const size_t start = pos_;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
                ++pos_;
            } else if ((c == '+' || c == '-') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E')) {
                ++pos_;
            } else {
                break;
            }
        }
        tokens_.push_back({TokenKind::Number, std::string(src_.substr(start, pos_ - start)), line_});
    }

    void lex_string(size_t start, std::string_view prefix) {
        const int start_line = line_;
        const char quote = src_[pos_];
        const bool triple = peek(1) == quote && peek(2) == quote;
        const size_t delim = triple ? 3 : 1;
        pos_ += delim;
        const size_t body_start = pos_;
        size_t body_end = src_.size();
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\\' && pos_ + 1 < src_.size()) {
                if (src_[pos_ + 1] == '\n') ++line_;
                pos_ += 2;
                continue;
            }
            if (c == '\n') {
                if (!triple) {
                    body_end = pos_;
                    break;
                }
                ++line_;
            }
            if (c == quote && (!triple || (peek(1) == quote && peek(2) == quote))) {
                body_end = pos_;
                pos_ += delim;
                break;
            }
            ++pos_;
        }
        if (pos_ >= src_.size() && body_end == src_.size()) body_end = src_.size();

        Token t{TokenKind::String, std::string(src_.substr(start, pos_ - start)), start_line};
        for (char p : prefix) {
            if (p == 'f' || p == 'F') t.fstring = true;
        }
        t.value = std::string(src_.substr(body_start, body_end - body_start));
        tokens_.push_back(std::move(t));
    }

    void lex_op() {
        for (std::string_view op : kMultiOps) {
            if (src_.substr(pos_, op.size()) == op) {
                tokens_.push_back({TokenKind::Op, std::string(op), line_});
                pos_ += op.size();
                return;
            }
        }
        const char c = src_[pos_];
        if (c == '(' || c == '[' || c == '{') ++depth_;
        if ((c == ')' || c == ']' || c == '}') && depth_ > 0) --depth_;
        tokens_.push_back({TokenKind::Op, std::string(1, c), line_});
        ++pos_;
    }

    std::string_view src_;
    size_t pos_ = 0;
    int line_ = 1;
    int depth_ = 0;
    std::vector<Token> tokens_;
};

}  // namespace

bool Token::interpolated() const {
    if (kind != TokenKind::String || !fstring) return false;
    for (size_t i = 0; i < value.size(); ++i) {
        if (value[i] != '{') continue;
        if (i + 1 < value.size() && value[i + 1] == '{') {
            ++i;
            continue;
        }
        return true;
    }
    return false;
}

std::vector<Token> tokenize(std::string_view source) {
    return Lexer(source).run();
}

std::vector<Statement> split_statements(const std::vector<Token>& tokens) {
    std::vector<Statement> out;
    size_t begin = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].kind == TokenKind::Newline) {
            if (i > begin) out.push_back({begin, i});
            begin = i + 1;
        }
    }
    if (begin < tokens.size()) out.push_back({begin, tokens.size()});
    return out;
}

}  // namespace sallm::python
