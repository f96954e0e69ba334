#include "grembed/embedding.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "grembed/error.hpp"

namespace grembed {

std::optional<NodeIndex> EmbeddingTable::find(const std::string& id) const {
  for (std::size_t i = 0; i < node_ids.size(); ++i)
    if (node_ids[i] == id) return static_cast<NodeIndex>(i);
  return std::nullopt;
}

NodeIndex EmbeddingTable::index_of(const std::string& id) const {
  if (auto v = find(id)) return *v;
  throw LookupError("node '" + id + "' has no embedding");
}

void EmbeddingTable::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata)
    if (k == key) {
      v = value;
      return;
    }
  metadata.emplace_back(key, value);
}

std::optional<std::string> EmbeddingTable::get(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return std::nullopt;
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << "node_id\t" << table.dim() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index v = 0; v < table.size(); ++v) {
    out << table.node_ids[static_cast<std::size_t>(v)] << '\t';
    for (Index k = 0; k < table.dim(); ++k) out << (k ? " " : "") << table.z(k, v);
    out << '\n';
  }
}

EmbeddingTable read_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty embedding file", 1);
  std::istringstream head(line);
  std::string tag;
  Index d = -1;
  if (!(head >> tag >> d) || tag != "node_id" || d < 0) throw ParseError("bad embedding header", 1);

  EmbeddingTable table;
  std::vector<double> values;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("missing tab in embedding row", line_no);
    table.node_ids.push_back(line.substr(0, tab));
    std::istringstream row(line.substr(tab + 1));
    for (Index k = 0; k < d; ++k) {
      double x;
      if (!(row >> x)) throw ParseError("embedding row has fewer than " + std::to_string(d) + " values", line_no);
      values.push_back(x);
    }
    std::string extra;
    if (row >> extra) throw ParseError("embedding row has extra values", line_no);
  }
  const auto n = static_cast<Index>(table.node_ids.size());
  table.z = Eigen::Map<const Matrix>(values.data(), d, n);
  return table;
}

void write_embeddings_file(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ResourceError("cannot write " + path);
  write_embeddings(table, out);
}

EmbeddingTable read_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file " + path);
  return read_embeddings(in);
}

DecoderKind parse_decoder(const std::string& name) {
  if (name == "sq_distance") return DecoderKind::sq_distance;
  if (name == "inner" || name == "inner_product") return DecoderKind::inner_product;
  if (name == "softmax") return DecoderKind::softmax_inner;
  if (name == "sigmoid") return DecoderKind::sigmoid_inner;
  if (name == "bilinear") return DecoderKind::bilinear;
  throw ConfigError("unknown decoder: " + name);
}

double decode_sq_distance(const Vector& a, const Vector& b) { return (a - b).squaredNorm(); }

double decode_inner(const Vector& a, const Vector& b) { return a.dot(b); }

double decode_sigmoid(const Vector& a, const Vector& b) { return 1.0 / (1.0 + std::exp(-a.dot(b))); }

double decode_softmax(const Matrix& z, NodeIndex i, NodeIndex j) {
  const Vector scores = z.transpose() * z.col(i);
  const double top = scores.maxCoeff();
  return std::exp(scores(j) - top) / (scores.array() - top).exp().sum();
}

BilinearDecoder::BilinearDecoder(std::vector<Matrix> relations, bool diagonal)
    : relations_(std::move(relations)), diagonal_(diagonal) {
  for (auto& a : relations_) {
    if (a.rows() != a.cols()) throw ShapeError("bilinear relation matrices must be square");
    if (diagonal_) a = Matrix(a.diagonal().asDiagonal());
  }
}

const Matrix& BilinearDecoder::relation(int edge_type) const {
  if (edge_type < 0 || static_cast<std::size_t>(edge_type) >= relations_.size())
    throw LookupError("unknown edge type " + std::to_string(edge_type));
  return relations_[static_cast<std::size_t>(edge_type)];
}

double BilinearDecoder::decode(const Vector& a, const Vector& b, int edge_type) const {
  const Matrix& r = relation(edge_type);
  if (r.rows() != a.size() || b.size() != a.size()) throw ShapeError("bilinear dimension mismatch");
  return a.dot(r * b);
}

double decode(DecoderKind kind, const Matrix& z, NodeIndex i, NodeIndex j, const BilinearDecoder* bilinear, int edge_type) {
  const Vector a = z.col(i);
  const Vector b = z.col(j);
  switch (kind) {
    case DecoderKind::sq_distance: return decode_sq_distance(a, b);
    case DecoderKind::inner_product: return decode_inner(a, b);
    case DecoderKind::sigmoid_inner: return decode_sigmoid(a, b);
    case DecoderKind::softmax_inner: return decode_softmax(z, i, j);
    case DecoderKind::bilinear:
      if (!bilinear) throw ContractError("bilinear decoding needs relation matrices");
      return bilinear->decode(a, b, edge_type);
  }
  throw ContractError("unknown decoder");
}

}  // namespace grembed
