#include "cmcnet/expression.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace cmcnet {

struct Expression::Node {
    enum class Kind { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Sin, Cos };
    Kind kind;
    double num = 0.0;
    int var = 0;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr make_num(double v) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = Kind::Num;
    n->num = v;
    return n;
}

NodePtr make_var(int axis) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = Kind::Var;
    n->var = axis;
    return n;
}

NodePtr make_node(Kind k, NodePtr a, NodePtr b = nullptr) {
    // constant folding and trivial identities keep derivative trees small
    auto is_num = [](const NodePtr& p, double v) {
        return p && p->kind == Kind::Num && p->num == v;
    };
    if (a && a->kind == Kind::Num && (!b || b->kind == Kind::Num)) {
        const double x = a->num, y = b ? b->num : 0.0;
        switch (k) {
            case Kind::Add: return make_num(x + y);
            case Kind::Sub: return make_num(x - y);
            case Kind::Mul: return make_num(x * y);
            case Kind::Div: return make_num(x / y);
            case Kind::Pow: return make_num(std::pow(x, y));
            case Kind::Neg: return make_num(-x);
            case Kind::Exp: return make_num(std::exp(x));
            case Kind::Sin: return make_num(std::sin(x));
            case Kind::Cos: return make_num(std::cos(x));
            default: break;
        }
    }
    if (k == Kind::Mul && (is_num(a, 0.0) || is_num(b, 0.0))) return make_num(0.0);
    if (k == Kind::Mul && is_num(a, 1.0)) return b;
    if (k == Kind::Mul && is_num(b, 1.0)) return a;
    if (k == Kind::Add && is_num(a, 0.0)) return b;
    if (k == Kind::Add && is_num(b, 0.0)) return a;
    if (k == Kind::Sub && is_num(b, 0.0)) return a;
    if (k == Kind::Pow && is_num(b, 1.0)) return a;
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

double eval_node(const Expression::Node& n, const Vec3& x) {
    switch (n.kind) {
        case Kind::Num: return n.num;
        case Kind::Var: return x[n.var];
        case Kind::Add: return eval_node(*n.a, x) + eval_node(*n.b, x);
        case Kind::Sub: return eval_node(*n.a, x) - eval_node(*n.b, x);
        case Kind::Mul: return eval_node(*n.a, x) * eval_node(*n.b, x);
        case Kind::Div: return eval_node(*n.a, x) / eval_node(*n.b, x);
        case Kind::Pow: return std::pow(eval_node(*n.a, x), eval_node(*n.b, x));
        case Kind::Neg: return -eval_node(*n.a, x);
        case Kind::Exp: return std::exp(eval_node(*n.a, x));
        case Kind::Sin: return std::sin(eval_node(*n.a, x));
        case Kind::Cos: return std::cos(eval_node(*n.a, x));
    }
    return 0.0;
}

NodePtr diff_node(const NodePtr& n, int axis) {
    switch (n->kind) {
        case Kind::Num: return make_num(0.0);
        case Kind::Var: return make_num(n->var == axis ? 1.0 : 0.0);
        case Kind::Add: return make_node(Kind::Add, diff_node(n->a, axis), diff_node(n->b, axis));
        case Kind::Sub: return make_node(Kind::Sub, diff_node(n->a, axis), diff_node(n->b, axis));
        case Kind::Mul:
            return make_node(Kind::Add, make_node(Kind::Mul, diff_node(n->a, axis), n->b),
                             make_node(Kind::Mul, n->a, diff_node(n->b, axis)));
        case Kind::Div:
            return make_node(
                Kind::Div,
                make_node(Kind::Sub, make_node(Kind::Mul, diff_node(n->a, axis), n->b),
                          make_node(Kind::Mul, n->a, diff_node(n->b, axis))),
                make_node(Kind::Mul, n->b, n->b));
        case Kind::Pow: {
            if (n->b->kind != Kind::Num)
                throw ExpressionError("only numeric exponents are differentiable");
            const double p = n->b->num;
            // d(u^p) = p u^(p-1) u'
            return make_node(Kind::Mul, make_num(p),
                             make_node(Kind::Mul, make_node(Kind::Pow, n->a, make_num(p - 1.0)),
                                       diff_node(n->a, axis)));
        }
        case Kind::Neg: return make_node(Kind::Neg, diff_node(n->a, axis));
        case Kind::Exp: return make_node(Kind::Mul, make_node(Kind::Exp, n->a), diff_node(n->a, axis));
        case Kind::Sin: return make_node(Kind::Mul, make_node(Kind::Cos, n->a), diff_node(n->a, axis));
        case Kind::Cos:
            return make_node(Kind::Neg,
                             make_node(Kind::Mul, make_node(Kind::Sin, n->a), diff_node(n->a, axis)));
    }
    return make_num(0.0);
}

void str_node(const Expression::Node& n, std::ostringstream& os) {
    switch (n.kind) {
        case Kind::Num: os << n.num; return;
        case Kind::Var: os << "x" << (n.var + 1); return;
        case Kind::Neg:
            os << "(-";
            str_node(*n.a, os);
            os << ")";
            return;
        case Kind::Exp:
        case Kind::Sin:
        case Kind::Cos:
            os << (n.kind == Kind::Exp ? "exp(" : n.kind == Kind::Sin ? "sin(" : "cos(");
            str_node(*n.a, os);
            os << ")";
            return;
        default: break;
    }
    os << "(";
    str_node(*n.a, os);
    switch (n.kind) {
        case Kind::Add: os << " + "; break;
        case Kind::Sub: os << " - "; break;
        case Kind::Mul: os << " * "; break;
        case Kind::Div: os << " / "; break;
        case Kind::Pow: os << " ^ "; break;
        default: break;
    }
    str_node(*n.b, os);
    os << ")";
}

class Parser {
  public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        auto e = parse_sum();
        skip_ws();
        if (pos_ != s_.size()) throw ExpressionError("unexpected trailing input: " + s_.substr(pos_));
        return e;
    }

  private:
    const std::string& s_;
    size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    NodePtr parse_sum() {
        auto lhs = parse_term();
        for (;;) {
            if (accept('+')) lhs = make_node(Kind::Add, lhs, parse_term());
            else if (accept('-')) lhs = make_node(Kind::Sub, lhs, parse_term());
            else return lhs;
        }
    }

    NodePtr parse_term() {
        auto lhs = parse_unary();
        for (;;) {
            if (accept('*')) lhs = make_node(Kind::Mul, lhs, parse_unary());
            else if (accept('/')) lhs = make_node(Kind::Div, lhs, parse_unary());
            else return lhs;
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) return make_node(Kind::Neg, parse_unary());
        if (accept('+')) return parse_unary();
        return parse_power();
    }

    NodePtr parse_power() {
        auto base = parse_primary();
        if (accept('^')) return make_node(Kind::Pow, base, parse_unary());
        return base;
    }

    NodePtr parse_primary() {
        skip_ws();
        if (accept('(')) {
            auto e = parse_sum();
            if (!accept(')')) throw ExpressionError("missing ')'");
            return e;
        }
        if (pos_ < s_.size() &&
            (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
            size_t end = 0;
            double v = std::stod(s_.substr(pos_), &end);
            pos_ += end;
            return make_num(v);
        }
        // identifiers: x1, x2, x3, exp, sin, cos
        size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                    s_[pos_] == '_'))
            ++pos_;
        const std::string id = s_.substr(start, pos_ - start);
        if (id == "x1") return make_var(0);
        if (id == "x2") return make_var(1);
        if (id == "x3") return make_var(2);
        if (id == "exp" || id == "sin" || id == "cos") {
            if (!accept('(')) throw ExpressionError("expected '(' after " + id);
            auto arg = parse_sum();
            if (!accept(')')) throw ExpressionError("missing ')'");
            const Kind k = (id == "exp") ? Kind::Exp : (id == "sin") ? Kind::Sin : Kind::Cos;
            return make_node(k, arg);
        }
        throw ExpressionError("unknown token '" + id + "' in expression");
    }
};

} // namespace

Expression Expression::parse(const std::string& text) {
    Parser p(text);
    return Expression(p.parse());
}

double Expression::eval(const Vec3& x) const {
    if (!node_) throw ExpressionError("empty expression");
    return eval_node(*node_, x);
}

Expression Expression::derivative(int axis) const {
    if (!node_) throw ExpressionError("empty expression");
    return Expression(diff_node(node_, axis));
}

std::string Expression::str() const {
    if (!node_) return "<empty>";
    std::ostringstream os;
    str_node(*node_, os);
    return os.str();
}

} // namespace cmcnet
