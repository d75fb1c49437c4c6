#pragma once

#include <string>

#include "cellforge/expr/matrix.hpp"

namespace cellforge::expr {

enum class MatrixFormat { kMatrixMarket, kDenseCsv, kNative };

MatrixFormat format_from_name(const std::string& name);
/// Guess from the file extension (.mtx, .csv, .cfx); throws if unknown.
MatrixFormat format_from_path(const std::string& path);

/// Load a count matrix. Matrix Market files carry no gene identifiers, so
/// those get synthesized names "g0", "g1", ... in column order; CSV takes
/// them from the header row and the native format stores them explicitly.
ExpressionMatrix load_matrix(const std::string& path, MatrixFormat format);

/// Native binary format, magic "CFX1": header (n_cells u64, n_genes u64,
/// nnz u64), CSR arrays (row offsets u64, column indices u32, values u32),
/// then u32-length-prefixed UTF-8 gene identifiers.
void save_matrix_native(const ExpressionMatrix& m, const std::string& path);

void save_matrix_market(const ExpressionMatrix& m, const std::string& path);

/// Annotations CSV: header cell_id,label,species,tissue[,split][,...extra].
CellAnnotations load_annotations(const std::string& path, std::vector<Split>* split_out);
void save_annotations(const CellAnnotations& a, const std::vector<Split>& split,
                      const std::string& path);

}  // namespace cellforge::expr
