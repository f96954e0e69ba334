#pragma once

// Line-oriented text checkpoints shared by the neural encoders:
//   <magic> <version>
//   <key> <value...>           (config echo)
//   param <name> <rows> <cols> (then one line per row)
//   end

#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "grembed/diff.hpp"
#include "grembed/error.hpp"

namespace grembed::checkpoint {

using NamedParameters = std::vector<std::pair<std::string, diff::Parameter*>>;

inline void write_header(std::ostream& out, const char* magic, int version) {
  out << magic << ' ' << version << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
}

inline void write_param(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  std::istringstream next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) throw ParseError(std::string("checkpoint ends before ") + what, line_ + 1);
    ++line_;
    return std::istringstream(line);
  }
  long line() const { return line_; }

  void header(const char* magic, int version, const char* kind) {
    auto s = next("header");
    std::string m;
    int v = 0;
    if (!(s >> m >> v) || m != magic) throw ParseError(std::string("not ") + kind, line());
    if (v != version) throw ParseError("unsupported checkpoint version " + std::to_string(v), line());
  }

  template <typename T>
  T field(const std::string& key) {
    auto s = next(key.c_str());
    std::string k;
    T value{};
    if (!(s >> k) || k != key || !(s >> value)) throw ParseError("expected '" + key + "'", line());
    return value;
  }

  std::vector<Index> list(const std::string& key) {
    auto s = next(key.c_str());
    std::string k;
    if (!(s >> k) || k != key) throw ParseError("expected '" + key + "'", line());
    std::vector<Index> out;
    Index d;
    while (s >> d) out.push_back(d);
    return out;
  }

  /// Reads `param <expect> R C` plus rows into target; with check_shape, R x C must match target.
  void param(const std::string& expect, Matrix& target, bool check_shape) {
    auto s = next(expect.c_str());
    std::string tag, name;
    Index rows = 0, cols = 0;
    if (!(s >> tag >> name >> rows >> cols) || tag != "param" || rows < 0 || cols < 0)
      throw ParseError("expected parameter '" + expect + "'", line());
    if (name != expect) throw ShapeError("checkpoint has '" + name + "' where '" + expect + "' belongs");
    if (check_shape && (rows != target.rows() || cols != target.cols()))
      throw ShapeError("parameter '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                       ", the dimension chain needs " + std::to_string(target.rows()) + "x" +
                       std::to_string(target.cols()));
    target.resize(rows, cols);
    values(target, rows, cols);
  }

  void values(Matrix& target, Index rows, Index cols) {
    target.resize(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      auto row = next("parameter values");
      for (Index j = 0; j < cols; ++j)
        if (!(row >> target(i, j))) throw ParseError("short parameter row", line());
    }
  }

  void end() {
    auto s = next("end");
    std::string tag;
    s >> tag;
    if (tag != "end") throw ParseError("expected 'end'", line());
  }

 private:
  std::istream& in_;
  long line_ = 0;
};

}  // namespace grembed::checkpoint
