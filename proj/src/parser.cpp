#include "shredql/parser.hpp"

#include <cctype>
#include <cstdlib>

namespace shredql {
namespace {

enum class Tok {
  Ident, Int, Real, String, Date,
  LParen, RParen, LBrace, RBrace, LBracket, RBracket,
  Lt, Gt, Le, EqEq, Ne,
  Comma, Semi, Dot, Colon, Assign,
  Plus, PlusPlus, Minus, Star, AndAnd, OrOr, Bang,
  End,
};

struct Token {
  Tok kind;
  std::string text;
  SourcePos pos;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skipWs();
      SourcePos pos{line_, col_};
      if (i_ >= src_.size()) {
        out.push_back({Tok::End, "", pos});
        return out;
      }
      char c = src_[i_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string id = ident();
        if (id == "d" && i_ < src_.size() && src_[i_] == '"') {
          out.push_back({Tok::Date, stringLit(), pos});
        } else {
          out.push_back({Tok::Ident, id, pos});
        }
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        out.push_back(number(pos));
        continue;
      }
      if (c == '"') {
        out.push_back({Tok::String, stringLit(), pos});
        continue;
      }
      out.push_back(punct(pos));
    }
  }

 private:
  void advance() {
    if (src_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void skipWs() {
    while (i_ < src_.size()) {
      char c = src_[i_];
      if (c == '/' && i_ + 1 < src_.size() && src_[i_ + 1] == '/') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string ident() {
    std::size_t start = i_;
    while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) ||
                                src_[i_] == '_'))
      advance();
    return src_.substr(start, i_ - start);
  }

  Token number(SourcePos pos) {
    std::size_t start = i_;
    bool real = false;
    while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_])))
      advance();
    if (i_ + 1 < src_.size() && src_[i_] == '.' &&
        std::isdigit(static_cast<unsigned char>(src_[i_ + 1]))) {
      real = true;
      advance();
      while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_])))
        advance();
    }
    if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
      std::size_t save = i_;
      advance();
      if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) advance();
      if (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
        real = true;
        while (i_ < src_.size() &&
               std::isdigit(static_cast<unsigned char>(src_[i_])))
          advance();
      } else {
        i_ = save;  // not an exponent
      }
    }
    return {real ? Tok::Real : Tok::Int, src_.substr(start, i_ - start), pos};
  }

  std::string stringLit() {
    SourcePos pos{line_, col_};
    advance();  // opening quote
    std::string out;
    while (i_ < src_.size() && src_[i_] != '"') {
      char c = src_[i_];
      if (c == '\\' && i_ + 1 < src_.size()) {
        advance();
        char e = src_[i_];
        out += (e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out += c;
      }
      advance();
    }
    if (i_ >= src_.size()) fail("SyntaxError", "unterminated string literal", pos);
    advance();  // closing quote
    return out;
  }

  Token punct(SourcePos pos) {
    auto two = [&](char a, char b) {
      return src_[i_] == a && i_ + 1 < src_.size() && src_[i_ + 1] == b;
    };
    auto make2 = [&](Tok k) {
      std::string t = src_.substr(i_, 2);
      advance();
      advance();
      return Token{k, t, pos};
    };
    auto make1 = [&](Tok k) {
      std::string t(1, src_[i_]);
      advance();
      return Token{k, t, pos};
    };
    if (two(':', '=')) return make2(Tok::Assign);
    if (two('=', '=')) return make2(Tok::EqEq);
    if (two('!', '=')) return make2(Tok::Ne);
    if (two('<', '=')) return make2(Tok::Le);
    if (two('&', '&')) return make2(Tok::AndAnd);
    if (two('|', '|')) return make2(Tok::OrOr);
    if (two('+', '+')) return make2(Tok::PlusPlus);
    switch (src_[i_]) {
      case '(': return make1(Tok::LParen);
      case ')': return make1(Tok::RParen);
      case '{': return make1(Tok::LBrace);
      case '}': return make1(Tok::RBrace);
      case '[': return make1(Tok::LBracket);
      case ']': return make1(Tok::RBracket);
      case '<': return make1(Tok::Lt);
      case '>': return make1(Tok::Gt);
      case ',': return make1(Tok::Comma);
      case ';': return make1(Tok::Semi);
      case '.': return make1(Tok::Dot);
      case ':': return make1(Tok::Colon);
      case '+': return make1(Tok::Plus);
      case '-': return make1(Tok::Minus);
      case '*': return make1(Tok::Star);
      case '!': return make1(Tok::Bang);
      default:
        fail("SyntaxError",
             std::string("unexpected character '") + src_[i_] + "'", pos);
    }
  }

  const std::string& src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(const std::string& src) : toks_(Lexer(src).run()) {}

  NrcProgram program() {
    NrcProgram p;
    while (!at(Tok::End)) {
      Assignment a;
      a.pos = cur().pos;
      a.var = expectIdent("assignment variable");
      expect(Tok::Assign, ":=");
      a.expr = expr();
      eat(Tok::Semi);
      p.assignments.push_back(std::move(a));
    }
    if (p.assignments.empty())
      fail("SyntaxError", "program has no assignments", cur().pos);
    return p;
  }

  ExprPtr expr() {
    SourcePos pos = cur().pos;
    if (atKeyword("for")) {
      next();
      auto e = makeExpr(NrcExpr::Kind::ForUnion, pos);
      e->name = expectIdent("loop variable");
      expectKeyword("in");
      e->e0 = expr();
      expectKeyword("union");
      e->e1 = expr();
      return e;
    }
    if (atKeyword("let")) {
      next();
      auto e = makeExpr(NrcExpr::Kind::Let, pos);
      e->name = expectIdent("let variable");
      expect(Tok::Assign, ":=");
      e->e0 = expr();
      expectKeyword("in");
      e->e1 = expr();
      return e;
    }
    if (atKeyword("if")) {
      next();
      auto cond = orExpr();
      expectKeyword("then");
      auto thenE = expr();
      if (atKeyword("else")) {
        next();
        auto e = makeExpr(NrcExpr::Kind::IfThenElse, pos);
        e->e0 = cond;
        e->e1 = thenE;
        e->e2 = expr();
        return e;
      }
      auto e = makeExpr(NrcExpr::Kind::IfThen, pos);
      e->e0 = cond;
      e->e1 = thenE;
      return e;
    }
    return orExpr();
  }

 private:
  const Token& cur() const { return toks_[i_]; }
  const Token& peek() const { return toks_[std::min(i_ + 1, toks_.size() - 1)]; }
  void next() { ++i_; }
  bool at(Tok k) const { return cur().kind == k; }
  bool atKeyword(const char* kw) const {
    return cur().kind == Tok::Ident && cur().text == kw;
  }
  bool eat(Tok k) {
    if (at(k)) {
      next();
      return true;
    }
    return false;
  }
  void expect(Tok k, const char* what) {
    if (!eat(k))
      fail("SyntaxError", std::string("expected ") + what + ", got '" +
                              cur().text + "'", cur().pos);
  }
  void expectKeyword(const char* kw) {
    if (!atKeyword(kw))
      fail("SyntaxError", std::string("expected '") + kw + "', got '" +
                              cur().text + "'", cur().pos);
    next();
  }
  std::string expectIdent(const char* what) {
    if (!at(Tok::Ident))
      fail("SyntaxError", std::string("expected ") + what + ", got '" +
                              cur().text + "'", cur().pos);
    std::string s = cur().text;
    next();
    return s;
  }

  ExprPtr binary(NrcExpr::Kind kind, PrimOp op, ExprPtr l, ExprPtr r,
                 SourcePos pos) {
    auto e = makeExpr(kind, pos);
    e->op = op;
    e->e0 = std::move(l);
    e->e1 = std::move(r);
    return e;
  }

  ExprPtr orExpr() {
    auto l = andExpr();
    while (at(Tok::OrOr)) {
      SourcePos pos = cur().pos;
      next();
      l = binary(NrcExpr::Kind::Prim, PrimOp::Or, l, andExpr(), pos);
    }
    return l;
  }

  ExprPtr andExpr() {
    auto l = cmpExpr();
    while (at(Tok::AndAnd)) {
      SourcePos pos = cur().pos;
      next();
      l = binary(NrcExpr::Kind::Prim, PrimOp::And, l, cmpExpr(), pos);
    }
    return l;
  }

  ExprPtr cmpExpr() {
    auto l = addExpr();
    PrimOp op;
    if (at(Tok::EqEq)) op = PrimOp::Eq;
    else if (at(Tok::Ne)) op = PrimOp::Ne;
    else if (at(Tok::Lt)) op = PrimOp::Lt;
    else if (at(Tok::Le)) op = PrimOp::Le;
    else return l;
    SourcePos pos = cur().pos;
    next();
    return binary(NrcExpr::Kind::Prim, op, l, addExpr(), pos);
  }

  ExprPtr addExpr() {
    auto l = mulExpr();
    while (at(Tok::Plus) || at(Tok::Minus) || at(Tok::PlusPlus)) {
      SourcePos pos = cur().pos;
      if (at(Tok::PlusPlus)) {
        next();
        auto e = makeExpr(NrcExpr::Kind::BagUnion, pos);
        e->e0 = l;
        e->e1 = mulExpr();
        l = e;
      } else {
        PrimOp op = at(Tok::Plus) ? PrimOp::Add : PrimOp::Sub;
        next();
        l = binary(NrcExpr::Kind::Prim, op, l, mulExpr(), pos);
      }
    }
    return l;
  }

  ExprPtr mulExpr() {
    auto l = unary();
    while (at(Tok::Star)) {
      SourcePos pos = cur().pos;
      next();
      l = binary(NrcExpr::Kind::Prim, PrimOp::Mul, l, unary(), pos);
    }
    return l;
  }

  ExprPtr unary() {
    if (at(Tok::Bang)) {
      SourcePos pos = cur().pos;
      next();
      auto e = makeExpr(NrcExpr::Kind::Prim, pos);
      e->op = PrimOp::Not;
      e->e0 = unary();
      return e;
    }
    return postfix();
  }

  ExprPtr postfix() {
    auto e = primary();
    while (at(Tok::Dot)) {
      SourcePos pos = cur().pos;
      next();
      auto p = makeExpr(NrcExpr::Kind::Project, pos);
      p->e0 = e;
      p->name = expectIdent("attribute name");
      e = p;
    }
    return e;
  }

  std::vector<std::string> identList() {
    std::vector<std::string> out;
    out.push_back(expectIdent("attribute"));
    while (eat(Tok::Comma)) out.push_back(expectIdent("attribute"));
    return out;
  }

  TypePtr typeExpr() {
    SourcePos pos = cur().pos;
    if (at(Tok::Lt)) {
      next();
      std::vector<std::pair<std::string, TypePtr>> attrs;
      if (!eat(Tok::Gt)) {
        do {
          std::string n = expectIdent("attribute");
          expect(Tok::Colon, "':'");
          attrs.emplace_back(n, typeExpr());
        } while (eat(Tok::Comma));
        expect(Tok::Gt, "'>'");
      }
      return tupleType(std::move(attrs));
    }
    std::string name = expectIdent("type name");
    if (name == "Bag") {
      expect(Tok::LParen, "'('");
      TypePtr el = typeExpr();
      expect(Tok::RParen, "')'");
      return bagType(el);
    }
    if (name == "int") return intType();
    if (name == "real") return realType();
    if (name == "string") return stringType();
    if (name == "bool") return boolType();
    if (name == "date") return dateType();
    fail("SyntaxError", "unknown type name '" + name + "'", pos);
  }

  ExprPtr primary() {
    SourcePos pos = cur().pos;
    switch (cur().kind) {
      case Tok::LParen: {
        next();
        auto e = expr();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::LBrace: {  // singleton bag
        next();
        auto e = makeExpr(NrcExpr::Kind::Singleton, pos);
        e->e0 = expr();
        expect(Tok::RBrace, "'}'");
        return e;
      }
      case Tok::Lt: {  // tuple constructor
        next();
        auto e = makeExpr(NrcExpr::Kind::TupleCtor, pos);
        if (!eat(Tok::Gt)) {
          do {
            std::string n = expectIdent("tuple attribute");
            expect(Tok::Assign, "':='");
            e->fields.emplace_back(n, expr());
          } while (eat(Tok::Comma));
          expect(Tok::Gt, "'>'");
        }
        return e;
      }
      case Tok::Int: {
        auto e = makeExpr(NrcExpr::Kind::Const, pos);
        e->constant = Value::ofInt(std::strtoll(cur().text.c_str(), nullptr, 10));
        next();
        return e;
      }
      case Tok::Real: {
        auto e = makeExpr(NrcExpr::Kind::Const, pos);
        e->constant = Value::ofReal(std::strtod(cur().text.c_str(), nullptr));
        next();
        return e;
      }
      case Tok::String: {
        auto e = makeExpr(NrcExpr::Kind::Const, pos);
        e->constant = Value::ofString(cur().text);
        next();
        return e;
      }
      case Tok::Date: {
        auto e = makeExpr(NrcExpr::Kind::Const, pos);
        e->constant = Value::ofDate(parseDateDays(cur().text, pos));
        next();
        return e;
      }
      case Tok::Ident: {
        const std::string& id = cur().text;
        if (id == "true" || id == "false") {
          auto e = makeExpr(NrcExpr::Kind::Const, pos);
          e->constant = Value::ofBool(id == "true");
          next();
          return e;
        }
        if (id == "empty") {
          next();
          expect(Tok::LParen, "'('");
          auto e = makeExpr(NrcExpr::Kind::EmptyBag, pos);
          e->declaredType = typeExpr();
          if (!e->declaredType->isBag())
            fail("TypeMismatch", "empty(T) requires a bag type", pos);
          expect(Tok::RParen, "')'");
          return e;
        }
        if (id == "get") {
          next();
          expect(Tok::LParen, "'('");
          auto e = makeExpr(NrcExpr::Kind::Get, pos);
          e->e0 = expr();
          expect(Tok::RParen, "')'");
          return e;
        }
        if (id == "dedup") {
          next();
          expect(Tok::LParen, "'('");
          auto e = makeExpr(NrcExpr::Kind::Dedup, pos);
          e->e0 = expr();
          expect(Tok::RParen, "')'");
          return e;
        }
        if (id == "groupBy") {
          next();
          expect(Tok::LBracket, "'['");
          auto e = makeExpr(NrcExpr::Kind::GroupBy, pos);
          e->keys = identList();
          expect(Tok::RBracket, "']'");
          expect(Tok::LParen, "'('");
          e->e0 = expr();
          expect(Tok::RParen, "')'");
          return e;
        }
        if (id == "sumBy") {
          next();
          expect(Tok::LBracket, "'['");
          auto e = makeExpr(NrcExpr::Kind::SumBy, pos);
          e->keys = identList();
          expect(Tok::Semi, "';'");
          e->values = identList();
          expect(Tok::RBracket, "']'");
          expect(Tok::LParen, "'('");
          e->e0 = expr();
          expect(Tok::RParen, "')'");
          return e;
        }
        auto e = makeExpr(NrcExpr::Kind::Var, pos);
        e->name = id;
        next();
        return e;
      }
      default:
        fail("SyntaxError", "expected expression, got '" + cur().text + "'",
             pos);
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
};

}  // namespace

NrcProgram parseProgram(const std::string& source) {
  return Parser(source).program();
}

ExprPtr parseExpr(const std::string& source) {
  Parser p(source);
  return p.expr();
}

}  // namespace shredql
