#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fse {

// Parsed math formula. Parentheses and braces only shape the tree and leave no
// node of their own; \frac{a}{b} is desugared to a binary '/' node, so every
// tree has exactly one canonical spelling.
struct FormulaNode {
  enum class Kind { number, symbol, unary, binary, power, function };

  Kind kind = Kind::number;
  std::string text;  // literal, symbol name, operator, or function name
  std::vector<FormulaNode> children;

  bool operator==(const FormulaNode&) const = default;

  static FormulaNode leaf(Kind k, std::string t) { return {k, std::move(t), {}}; }
};

// Recursive-descent parser. Grammar, loosest binding first:
//   relation  := additive (('=' | '<' | '>' | '<=' | '>=' | '!=') additive)*
//   additive  := term (('+' | '-') term)*
//   term      := unary (('*' | '/' | <juxtaposition>) unary)*
//   unary     := ('-' | '+') unary | power
//   power     := primary ('^' exponent)?      exponent := '-' exponent | power
//   primary   := number | letter | \pi ... | '(' relation ')' | '{' relation '}'
//              | \frac '{' relation '}' '{' relation '}' | func primary-or-power
// Returns nullopt when the input is outside the grammar.
std::optional<FormulaNode> parse_formula(std::string_view src);

// Fully parenthesised, space separated: "( ( x - ( 2 * m ) ) = 0 )".
std::string serialize(const FormulaNode& node);

struct NormalizedFormula {
  std::string canonical;
  bool fallback = false;  // true when the parser rejected the input
};

// Canonical spelling of a formula. Unparseable input degrades to one token
// per character, prefixed by a "?" marker; the result is idempotent either way.
NormalizedFormula normalize_formula(std::string_view src);

}  // namespace fse
