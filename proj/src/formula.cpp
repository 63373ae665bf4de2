#include "fse/formula.hpp"

#include <array>
#include <cctype>

namespace fse {

namespace {

struct Tok {
  enum Type { number, letter, symbol, func, frac, op, lparen, rparen, lbrace, rbrace, end } type;
  std::string text;
};

constexpr std::array<std::string_view, 7> kFunctions{"sqrt", "sin", "cos", "tan", "log", "ln", "exp"};
constexpr std::array<std::string_view, 5> kSymbols{"pi", "alpha", "beta", "theta", "infty"};

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Returns false on a character or command outside the grammar.
bool lex(std::string_view s, std::vector<Tok>& out) {
  std::size_t i = 0;
  auto starts = [&](std::string_view p) { return s.substr(i, p.size()) == p; };
  while (i < s.size()) {
    const char c = s[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (is_digit(c)) {
      std::size_t j = i;
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
        ++j;
        while (j < s.size() && is_digit(s[j])) ++j;
      }
      out.push_back({Tok::number, std::string(s.substr(i, j - i))});
      i = j;
      continue;
    }
    if (is_alpha(c)) {
      // A letter run: function names are peeled off, everything else is one
      // symbol per letter (juxtaposition means multiplication).
      bool matched = false;
      for (auto f : kFunctions) {
        if (starts(f)) {
          out.push_back({Tok::func, std::string(f)});
          i += f.size();
          matched = true;
          break;
        }
      }
      if (!matched) out.push_back({Tok::letter, std::string(1, c)}), ++i;
      continue;
    }
    if (c == '\\') {
      std::size_t j = i + 1;
      while (j < s.size() && is_alpha(s[j])) ++j;
      const std::string_view cmd = s.substr(i + 1, j - i - 1);
      if (cmd.empty()) {
        // "\{", "\}" and "\," style escapes
        if (j < s.size() && (s[j] == '{' || s[j] == '}')) {
          out.push_back({s[j] == '{' ? Tok::lbrace : Tok::rbrace, std::string(1, s[j])});
          i = j + 1;
          continue;
        }
        if (j < s.size() && (s[j] == ',' || s[j] == ';' || s[j] == ' ')) {
          i = j + 1;
          continue;
        }
        return false;
      }
      i = j;
      if (cmd == "frac" || cmd == "dfrac" || cmd == "tfrac") out.push_back({Tok::frac, "frac"});
      else if (cmd == "cdot" || cmd == "times") out.push_back({Tok::op, "*"});
      else if (cmd == "div") out.push_back({Tok::op, "/"});
      else if (cmd == "le" || cmd == "leq") out.push_back({Tok::op, "<="});
      else if (cmd == "ge" || cmd == "geq") out.push_back({Tok::op, ">="});
      else if (cmd == "neq" || cmd == "ne") out.push_back({Tok::op, "!="});
      else if (cmd == "left" || cmd == "right") continue;
      else {
        bool ok = false;
        for (auto f : kFunctions)
          if (cmd == f) out.push_back({Tok::func, std::string(f)}), ok = true;
        for (auto sym : kSymbols)
          if (cmd == sym) out.push_back({Tok::symbol, "\\" + std::string(sym)}), ok = true;
        if (!ok) return false;
      }
      continue;
    }
    if (starts("<=") || starts(">=") || starts("!=")) {
      out.push_back({Tok::op, std::string(s.substr(i, 2))});
      i += 2;
      continue;
    }
    // Unicode operators (UTF-8)
    if (starts("\xE2\x88\x92")) {  // U+2212 minus
      out.push_back({Tok::op, "-"});
      i += 3;
      continue;
    }
    if (starts("\xC3\x97")) {  // U+00D7 times
      out.push_back({Tok::op, "*"});
      i += 2;
      continue;
    }
    if (starts("\xC3\xB7")) {  // U+00F7 division
      out.push_back({Tok::op, "/"});
      i += 2;
      continue;
    }
    switch (c) {
      case '+': case '-': case '*': case '/': case '^': case '=': case '<': case '>':
        out.push_back({Tok::op, std::string(1, c)});
        break;
      case '(': out.push_back({Tok::lparen, "("}); break;
      case ')': out.push_back({Tok::rparen, ")"}); break;
      case '{': out.push_back({Tok::lbrace, "{"}); break;
      case '}': out.push_back({Tok::rbrace, "}"}); break;
      case '[': out.push_back({Tok::lparen, "("}); break;
      case ']': out.push_back({Tok::rparen, ")"}); break;
      default: return false;
    }
    ++i;
  }
  out.push_back({Tok::end, ""});
  return true;
}

struct Reject {};

class Parser {
 public:
  explicit Parser(std::vector<Tok> toks) : toks_(std::move(toks)) {}

  FormulaNode parse() {
    auto n = relation();
    if (peek().type != Tok::end) throw Reject{};
    return n;
  }

 private:
  using K = FormulaNode::Kind;

  const Tok& peek() const { return toks_[pos_]; }
  bool at_op(std::string_view o) const { return peek().type == Tok::op && peek().text == o; }
  Tok take() { return toks_[pos_++]; }
  void expect(Tok::Type t) {
    if (peek().type != t) throw Reject{};
    ++pos_;
  }

  static FormulaNode binary(std::string op, FormulaNode l, FormulaNode r) {
    return {K::binary, std::move(op), {std::move(l), std::move(r)}};
  }

  FormulaNode relation() {
    auto left = additive();
    while (at_op("=") || at_op("<") || at_op(">") || at_op("<=") || at_op(">=") || at_op("!=")) {
      auto op = take().text;
      left = binary(op, std::move(left), additive());
    }
    return left;
  }

  FormulaNode additive() {
    auto left = term();
    while (at_op("+") || at_op("-")) {
      auto op = take().text;
      left = binary(op, std::move(left), term());
    }
    return left;
  }

  bool starts_primary() const {
    switch (peek().type) {
      case Tok::number: case Tok::letter: case Tok::symbol: case Tok::func:
      case Tok::frac: case Tok::lparen: case Tok::lbrace:
        return true;
      default:
        return false;
    }
  }

  FormulaNode term() {
    auto left = unary();
    for (;;) {
      if (at_op("*") || at_op("/")) {
        auto op = take().text;
        left = binary(op, std::move(left), unary());
      } else if (starts_primary()) {
        left = binary("*", std::move(left), power());
      } else {
        return left;
      }
    }
  }

  FormulaNode unary() {
    if (at_op("-")) {
      take();
      return {K::unary, "-", {unary()}};
    }
    if (at_op("+")) {
      take();
      return unary();
    }
    return power();
  }

  FormulaNode power() {
    auto base = primary();
    if (at_op("^")) {
      take();
      return {K::power, "^", {std::move(base), exponent()}};
    }
    return base;
  }

  FormulaNode exponent() {
    if (at_op("-")) {
      take();
      return {K::unary, "-", {exponent()}};
    }
    return power();
  }

  FormulaNode group(Tok::Type open, Tok::Type close) {
    expect(open);
    auto inner = relation();
    expect(close);
    return inner;
  }

  FormulaNode primary() {
    const Tok& t = peek();
    switch (t.type) {
      case Tok::number: return FormulaNode::leaf(K::number, take().text);
      case Tok::letter:
      case Tok::symbol: return FormulaNode::leaf(K::symbol, take().text);
      case Tok::lparen: return group(Tok::lparen, Tok::rparen);
      case Tok::lbrace: return group(Tok::lbrace, Tok::rbrace);
      case Tok::frac: {
        take();
        auto num = group(Tok::lbrace, Tok::rbrace);
        auto den = group(Tok::lbrace, Tok::rbrace);
        return binary("/", std::move(num), std::move(den));
      }
      case Tok::func: {
        auto name = take().text;
        FormulaNode arg = peek().type == Tok::lparen   ? group(Tok::lparen, Tok::rparen)
                          : peek().type == Tok::lbrace ? group(Tok::lbrace, Tok::rbrace)
                                                       : power();
        return {K::function, std::move(name), {std::move(arg)}};
      }
      default: throw Reject{};
    }
  }

  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
};

void serialize_into(const FormulaNode& n, std::string& out) {
  using K = FormulaNode::Kind;
  switch (n.kind) {
    case K::number:
    case K::symbol: out += n.text; break;
    case K::unary:
      out += "( ";
      out += n.text;
      out += ' ';
      serialize_into(n.children[0], out);
      out += " )";
      break;
    case K::binary:
    case K::power:
      out += "( ";
      serialize_into(n.children[0], out);
      out += ' ';
      out += n.text;
      out += ' ';
      serialize_into(n.children[1], out);
      out += " )";
      break;
    case K::function:
      out += n.text;
      out += " ( ";
      serialize_into(n.children[0], out);
      out += " )";
      break;
  }
}

// One token per UTF-8 code point, whitespace dropped.
std::string char_tokens(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    len = std::min(len, s.size() - i);
    if (!std::isspace(c)) {
      if (!out.empty()) out += ' ';
      out.append(s.substr(i, len));
    }
    i += len;
  }
  return out;
}

}  // namespace

std::optional<FormulaNode> parse_formula(std::string_view src) {
  std::vector<Tok> toks;
  if (!lex(src, toks)) return std::nullopt;
  if (toks.size() == 1) return std::nullopt;  // only the end marker
  try {
    return Parser(std::move(toks)).parse();
  } catch (const Reject&) {
    return std::nullopt;
  }
}

std::string serialize(const FormulaNode& node) {
  std::string out;
  serialize_into(node, out);
  return out;
}

NormalizedFormula normalize_formula(std::string_view src) {
  if (auto ast = parse_formula(src)) return {serialize(*ast), false};
  std::string chars = char_tokens(src);
  if (chars != "?" && chars.rfind("? ", 0) != 0) chars = chars.empty() ? "?" : "? " + chars;
  return {std::move(chars), true};
}

}  // namespace fse
