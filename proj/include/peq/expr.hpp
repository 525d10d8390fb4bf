#pragma once

#include "peq/jet.hpp"

#include <cctype>
#include <cstdio>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace peq {

/// Names the coordinates of one chart; all expressions are parsed against a
/// chart so coordinate references become indices.
struct Chart {
    int dim = 0;
    std::vector<std::string> coords;

    Chart() = default;
    explicit Chart(std::vector<std::string> names) : dim(static_cast<int>(names.size())), coords(std::move(names)) {
        if (dim < 2) throw std::invalid_argument("chart dimension must be at least 2");
        for (std::size_t i = 0; i < coords.size(); ++i)
            for (std::size_t j = i + 1; j < coords.size(); ++j)
                if (coords[i] == coords[j]) throw std::invalid_argument("duplicate coordinate name '" + coords[i] + "'");
    }

    std::optional<int> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < coords.size(); ++i)
            if (coords[i] == name) return static_cast<int>(i);
        return std::nullopt;
    }
};

/// Parse failure, carrying the byte offset into the source text and a short
/// description of what would have been acceptable there.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& what, const std::string& expected)
        : std::runtime_error(what + " at offset " + std::to_string(offset) +
                             (expected.empty() ? "" : " (expected " + expected + ")")),
          offset_(offset), expected_(expected) {}

    std::size_t offset() const { return offset_; }
    const std::string& expected() const { return expected_; }

private:
    std::size_t offset_;
    std::string expected_;
};

enum class ExprKind { Literal, Coord, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class ExprFn { Exp, Ln, Sin, Cos, Sqrt };

namespace detail {
struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    ExprKind kind;
    double literal = 0.0;     // Literal
    int coord = -1;           // Coord
    ExprFn fn = ExprFn::Exp;  // Call
    double exponent = 0.0;    // Pow: the constant-folded right-hand side
    std::vector<NodePtr> children;
};
} // namespace detail

/// Immutable parsed expression over one chart's coordinates.
class Expression {
public:
    Expression() = default;

    int dim() const { return dim_; }
    ExprKind kind() const { return root_->kind; }
    double literal() const { return root_->literal; }
    int coord() const { return root_->coord; }
    ExprFn fn() const { return root_->fn; }
    double exponent() const { return root_->exponent; }
    std::size_t arity() const { return root_->children.size(); }
    Expression child(std::size_t i) const { return Expression(root_->children.at(i), dim_); }

    friend Expression parse(std::string_view, const Chart&);
    friend Jet eval_jet(const Expression&, std::span<const double>, int);

private:
    Expression(detail::NodePtr root, int dim) : root_(std::move(root)), dim_(dim) {}
    detail::NodePtr root_;
    int dim_ = 0;
};

namespace detail {

enum class Tok { End, Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma };

struct Token {
    Tok type = Tok::End;
    std::size_t offset = 0;
    double number = 0.0;
    std::string text;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return cur_; }

    Token take() {
        Token t = cur_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        cur_ = Token{};
        cur_.offset = pos_;
        if (pos_ >= src_.size()) {
            cur_.type = Tok::End;
            return;
        }
        const char c = src_[pos_];
        switch (c) {
            case '+': cur_.type = Tok::Plus; ++pos_; return;
            case '-': cur_.type = Tok::Minus; ++pos_; return;
            case '*': cur_.type = Tok::Star; ++pos_; return;
            case '/': cur_.type = Tok::Slash; ++pos_; return;
            case '^': cur_.type = Tok::Caret; ++pos_; return;
            case '(': cur_.type = Tok::LParen; ++pos_; return;
            case ')': cur_.type = Tok::RParen; ++pos_; return;
            case ',': cur_.type = Tok::Comma; ++pos_; return;
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            lex_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            cur_.type = Tok::Ident;
            cur_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        throw ParseError(pos_, std::string("unexpected character '") + c + "'", "");
    }

    void lex_number() {
        std::size_t start = pos_;
        bool any_digit = false;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
            any_digit = true;
        }
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
                any_digit = true;
            }
        }
        if (!any_digit) throw ParseError(start, "malformed number literal", "digits");
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            } else {
                pos_ = mark; // 'e' starts an identifier, not an exponent
            }
        }
        cur_.type = Tok::Number;
        cur_.text = std::string(src_.substr(start, pos_ - start));
        cur_.number = std::stod(cur_.text);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Token cur_;
};

class Parser {
public:
    Parser(std::string_view src, const Chart& chart) : lex_(src), chart_(chart) {}

    NodePtr run() {
        NodePtr e = parse_expr();
        const Token& t = lex_.peek();
        if (t.type != Tok::End) throw ParseError(t.offset, "trailing input", "end of expression or operator");
        return e;
    }

private:
    static std::shared_ptr<ExprNode> make(ExprKind kind) {
        auto n = std::make_shared<ExprNode>();
        n->kind = kind;
        return n;
    }

    NodePtr parse_expr() {
        NodePtr lhs = parse_term();
        for (;;) {
            const Tok t = lex_.peek().type;
            if (t != Tok::Plus && t != Tok::Minus) return lhs;
            lex_.take();
            NodePtr rhs = parse_term();
            auto n = make(t == Tok::Plus ? ExprKind::Add : ExprKind::Sub);
            n->children = {lhs, rhs};
            lhs = n;
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_factor();
        for (;;) {
            const Tok t = lex_.peek().type;
            if (t != Tok::Star && t != Tok::Slash) return lhs;
            lex_.take();
            NodePtr rhs = parse_factor();
            auto n = make(t == Tok::Star ? ExprKind::Mul : ExprKind::Div);
            n->children = {lhs, rhs};
            lhs = n;
        }
    }

    // Unary minus binds between '^' and '*': -x^2 is -(x^2).
    NodePtr parse_factor() {
        if (lex_.peek().type == Tok::Minus) {
            lex_.take();
            auto n = make(ExprKind::Neg);
            n->children = {parse_factor()};
            return n;
        }
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_primary();
        if (lex_.peek().type != Tok::Caret) return base;
        const Token caret = lex_.take();
        NodePtr expo = parse_factor(); // right-associative; allows a leading minus
        return make_pow(base, expo, caret.offset);
    }

    NodePtr make_pow(NodePtr base, NodePtr expo, std::size_t at) {
        auto n = make(ExprKind::Pow);
        n->exponent = fold_constant(expo, at);
        n->children = {std::move(base), std::move(expo)};
        return n;
    }

    // Exponents must be constant: arithmetic over number literals only.
    double fold_constant(const NodePtr& e, std::size_t at) const {
        switch (e->kind) {
            case ExprKind::Literal: return e->literal;
            case ExprKind::Neg: return -fold_constant(e->children[0], at);
            case ExprKind::Add: return fold_constant(e->children[0], at) + fold_constant(e->children[1], at);
            case ExprKind::Sub: return fold_constant(e->children[0], at) - fold_constant(e->children[1], at);
            case ExprKind::Mul: return fold_constant(e->children[0], at) * fold_constant(e->children[1], at);
            case ExprKind::Div: return fold_constant(e->children[0], at) / fold_constant(e->children[1], at);
            case ExprKind::Pow: return std::pow(fold_constant(e->children[0], at), e->exponent);
            default:
                throw ParseError(at, "exponent is not constant", "a real-literal exponent");
        }
    }

    NodePtr parse_primary() {
        Token t = lex_.take();
        switch (t.type) {
            case Tok::Number: {
                auto n = make(ExprKind::Literal);
                n->literal = t.number;
                return n;
            }
            case Tok::Ident: return parse_ident(t);
            case Tok::LParen: {
                NodePtr inner = parse_expr();
                expect(Tok::RParen, "')'");
                return inner;
            }
            default:
                throw ParseError(t.offset, "unexpected token", "a number, coordinate, function call, or '('");
        }
    }

    NodePtr parse_ident(const Token& t) {
        if (lex_.peek().type == Tok::LParen) {
            lex_.take();
            std::vector<NodePtr> args;
            args.push_back(parse_expr());
            while (lex_.peek().type == Tok::Comma) {
                lex_.take();
                args.push_back(parse_expr());
            }
            expect(Tok::RParen, "')'");
            return make_call(t, std::move(args));
        }
        if (auto idx = chart_.index_of(t.text)) {
            auto n = make(ExprKind::Coord);
            n->coord = *idx;
            return n;
        }
        throw ParseError(t.offset, "unknown identifier '" + t.text + "'", "a chart coordinate");
    }

    NodePtr make_call(const Token& name, std::vector<NodePtr> args) {
        auto unary = [&](ExprFn fn) {
            if (args.size() != 1)
                throw ParseError(name.offset, "function '" + name.text + "' takes one argument", "");
            auto n = make(ExprKind::Call);
            n->fn = fn;
            n->children = std::move(args);
            return n;
        };
        if (name.text == "exp") return unary(ExprFn::Exp);
        if (name.text == "ln") return unary(ExprFn::Ln);
        if (name.text == "sin") return unary(ExprFn::Sin);
        if (name.text == "cos") return unary(ExprFn::Cos);
        if (name.text == "sqrt") return unary(ExprFn::Sqrt);
        if (name.text == "pow") {
            if (args.size() != 2)
                throw ParseError(name.offset, "function 'pow' takes two arguments", "");
            return make_pow(args[0], args[1], name.offset);
        }
        throw ParseError(name.offset, "unknown function '" + name.text + "'",
                         "one of exp, ln, sin, cos, sqrt, pow");
    }

    void expect(Tok type, const std::string& what) {
        const Token& t = lex_.peek();
        if (t.type != type) throw ParseError(t.offset, "unexpected token", what);
        lex_.take();
    }

    Lexer lex_;
    const Chart& chart_;
};

} // namespace detail

/// Parses an arithmetic expression over the chart's coordinates.
/// Grammar: + - * / ^ with the usual precedence, ^ right-associative and
/// binding tighter than unary minus; function calls exp, ln, sin, cos, sqrt,
/// pow; '^' and pow accept constant exponents only.
inline Expression parse(std::string_view text, const Chart& chart) {
    detail::Parser p(text, chart);
    return Expression(p.run(), chart.dim);
}

/// Evaluates an expression into a jet of the requested truncation order,
/// expanded at the given point.
inline Jet eval_jet(const Expression& e, std::span<const double> point, int trunc) {
    if (static_cast<int>(point.size()) != e.dim())
        throw std::invalid_argument("evaluation point dimension mismatch");
    struct Rec {
        std::span<const double> pt;
        int trunc;
        Jet go(const detail::ExprNode& n) {
            const int dim = static_cast<int>(pt.size());
            switch (n.kind) {
                case ExprKind::Literal: return Jet::constant(n.literal, dim, trunc);
                case ExprKind::Coord:
                    return Jet::variable(n.coord, pt[static_cast<std::size_t>(n.coord)], dim, trunc);
                case ExprKind::Neg: return -go(*n.children[0]);
                case ExprKind::Add: return go(*n.children[0]) + go(*n.children[1]);
                case ExprKind::Sub: return go(*n.children[0]) - go(*n.children[1]);
                case ExprKind::Mul: return go(*n.children[0]) * go(*n.children[1]);
                case ExprKind::Div: return go(*n.children[0]) / go(*n.children[1]);
                case ExprKind::Pow: return pow(go(*n.children[0]), n.exponent);
                case ExprKind::Call:
                    switch (n.fn) {
                        case ExprFn::Exp: return exp(go(*n.children[0]));
                        case ExprFn::Ln: return ln(go(*n.children[0]));
                        case ExprFn::Sin: return sin(go(*n.children[0]));
                        case ExprFn::Cos: return cos(go(*n.children[0]));
                        case ExprFn::Sqrt: return sqrt(go(*n.children[0]));
                    }
            }
            throw std::logic_error("unreachable expression node");
        }
    };
    return Rec{point, trunc}.go(*e.root_);
}

/// Plain scalar evaluation at a point.
inline double eval_value(const Expression& e, std::span<const double> point) {
    return eval_jet(e, point, 0).value();
}

/// Renders the expression fully parenthesized; parsing the result yields the
/// same tree.  Coordinate indices print as x1..xm placeholders unless a chart
/// is supplied.
inline std::string to_string(const Expression& e, const Chart* chart = nullptr) {
    struct Rec {
        const Chart* chart;
        std::string go(const Expression& e) {
            char buf[64];
            switch (e.kind()) {
                case ExprKind::Literal:
                    std::snprintf(buf, sizeof buf, "%.17g", e.literal());
                    return buf;
                case ExprKind::Coord:
                    if (chart) return chart->coords[static_cast<std::size_t>(e.coord())];
                    return "x" + std::to_string(e.coord() + 1);
                case ExprKind::Neg: return "(-" + go(e.child(0)) + ")";
                case ExprKind::Add: return "(" + go(e.child(0)) + " + " + go(e.child(1)) + ")";
                case ExprKind::Sub: return "(" + go(e.child(0)) + " - " + go(e.child(1)) + ")";
                case ExprKind::Mul: return "(" + go(e.child(0)) + " * " + go(e.child(1)) + ")";
                case ExprKind::Div: return "(" + go(e.child(0)) + " / " + go(e.child(1)) + ")";
                case ExprKind::Pow: return "(" + go(e.child(0)) + " ^ " + go(e.child(1)) + ")";
                case ExprKind::Call: {
                    const char* name = nullptr;
                    switch (e.fn()) {
                        case ExprFn::Exp: name = "exp"; break;
                        case ExprFn::Ln: name = "ln"; break;
                        case ExprFn::Sin: name = "sin"; break;
                        case ExprFn::Cos: name = "cos"; break;
                        case ExprFn::Sqrt: name = "sqrt"; break;
                    }
                    return std::string(name) + "(" + go(e.child(0)) + ")";
                }
            }
            throw std::logic_error("unreachable expression node");
        }
    };
    return Rec{chart}.go(e);
}

inline std::string to_string(const Expression& e, const Chart& chart) { return to_string(e, &chart); }

} // namespace peq
