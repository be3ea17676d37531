#pragma once

#include "cmcnet/geometry.hpp"

#include <memory>
#include <string>

namespace cmcnet {

// Small arithmetic expressions over x1, x2, x3 with +, -, *, /, ^, exp, sin,
// cos. Used for user-supplied conformal factors. Supports exact symbolic
// differentiation so metrics built from expressions carry exact derivative
// callbacks.
class Expression {
  public:
    Expression() = default;
    static Expression parse(const std::string& text);

    double eval(const Vec3& x) const;
    Expression derivative(int axis) const;
    bool valid() const { return node_ != nullptr; }
    std::string str() const;

    struct Node;

  private:
    explicit Expression(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

struct ExpressionError : Error {
    explicit ExpressionError(const std::string& what) : Error(what) {}
};

} // namespace cmcnet
