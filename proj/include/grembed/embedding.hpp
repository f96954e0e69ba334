#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "grembed/types.hpp"

namespace grembed {

/// d x |V| embedding matrix; column v is the embedding of node v.
struct EmbeddingTable {
  Matrix z;
  std::vector<std::string> node_ids;
  std::string method;
  /// Ordered hyperparameter echo (key, value).
  std::vector<std::pair<std::string, std::string>> metadata;

  Index dim() const { return z.rows(); }
  Index size() const { return z.cols(); }
  std::optional<NodeIndex> find(const std::string& id) const;
  /// Throws LookupError for unknown ids.
  NodeIndex index_of(const std::string& id) const;
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
};

/// Header `node_id<TAB>d`, then `id<TAB>f1 ... fd`, round-trip precision.
void write_embeddings(const EmbeddingTable& table, std::ostream& out);
EmbeddingTable read_embeddings(std::istream& in);
void write_embeddings_file(const EmbeddingTable& table, const std::string& path);
EmbeddingTable read_embeddings_file(const std::string& path);

// Decoders -----------------------------------------------------------------------

enum class DecoderKind { sq_distance, inner_product, softmax_inner, sigmoid_inner, bilinear };

DecoderKind parse_decoder(const std::string& name);

double decode_sq_distance(const Vector& a, const Vector& b);
double decode_inner(const Vector& a, const Vector& b);
double decode_sigmoid(const Vector& a, const Vector& b);
/// e^{z_i.z_j} / sum_k e^{z_i.z_k} over all columns of z.
double decode_softmax(const Matrix& z, NodeIndex i, NodeIndex j);

/// z_i^T A_tau z_j with one square matrix per edge type.
class BilinearDecoder {
 public:
  BilinearDecoder(std::vector<Matrix> relations, bool diagonal = false);

  double decode(const Vector& a, const Vector& b, int edge_type) const;
  const Matrix& relation(int edge_type) const;
  std::size_t relation_count() const { return relations_.size(); }
  bool diagonal() const { return diagonal_; }

 private:
  std::vector<Matrix> relations_;
  bool diagonal_;
};

/// Decodes columns i and j of `z`; bilinear needs `bilinear` and an edge type.
double decode(DecoderKind kind, const Matrix& z, NodeIndex i, NodeIndex j, const BilinearDecoder* bilinear = nullptr,
              int edge_type = 0);

}  // namespace grembed
