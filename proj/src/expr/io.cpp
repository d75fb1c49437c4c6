#include "cellforge/expr/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cellforge/util/errors.hpp"

namespace cellforge::expr {

static_assert(std::endian::native == std::endian::little,
              "matrix I/O assumes a little-endian host");

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

/// Parses a non-negative integer count; rejects negatives and fractions.
std::uint32_t parse_count(const std::string& token, const std::string& where) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(token, &pos);
    } catch (const std::exception&) {
        throw ValidationError("unparseable count '" + token + "' at " + where);
    }
    if (pos != token.size())
        throw ValidationError("trailing characters in count '" + token + "' at " + where);
    if (v < 0.0) throw ValidationError("negative count '" + token + "' at " + where);
    if (std::floor(v) != v)
        throw ValidationError("non-integral count '" + token + "' at " + where);
    if (v > static_cast<double>(UINT32_MAX))
        throw ValidationError("count overflows 32 bits at " + where);
    return static_cast<std::uint32_t>(v);
}

void canonicalize_rows(ExpressionMatrix& m) {
    for (auto& row : m.rows) {
        std::sort(row.begin(), row.end(),
                  [](const SparseEntry& a, const SparseEntry& b) { return a.gene < b.gene; });
        row.erase(std::remove_if(row.begin(), row.end(),
                                 [](const SparseEntry& e) { return e.count == 0; }),
                  row.end());
    }
}

ExpressionMatrix load_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix file: " + path);
    std::string line;
    std::size_t lineno = 0;
    // header / comment lines
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '%') {
            if (t.rfind("%%MatrixMarket", 0) == 0) {
                std::istringstream hs(t);
                std::string tag, object, fmt, field;
                hs >> tag >> object >> fmt >> field;
                if (object != "matrix" || fmt != "coordinate")
                    throw ValidationError("unsupported MatrixMarket header at line " +
                                          std::to_string(lineno));
            }
            continue;
        }
        saw_header = true;
        break;
    }
    if (!saw_header)
        throw ValidationError("empty or header-only matrix file: " + path);
    std::size_t n_rows, n_cols, nnz;
    {
        std::istringstream hs(trim(line));
        if (!(hs >> n_rows >> n_cols >> nnz))
            throw ValidationError("malformed size line at line " + std::to_string(lineno) +
                                  " of " + path);
    }
    ExpressionMatrix m;
    m.n_cells = n_rows;
    m.n_genes = n_cols;
    m.rows.assign(n_rows, {});
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '%') continue;
        std::istringstream es(t);
        std::size_t r, c;
        std::string value;
        if (!(es >> r >> c >> value))
            throw ValidationError("malformed entry at line " + std::to_string(lineno) + " of " +
                                  path);
        if (r < 1 || r > n_rows || c < 1 || c > n_cols)
            throw ValidationError("coordinate out of range at line " + std::to_string(lineno));
        std::uint32_t count =
            parse_count(value, "line " + std::to_string(lineno) + " of " + path);
        if (count > 0)
            m.rows[r - 1].push_back({static_cast<std::uint32_t>(c - 1), count});
        ++seen;
    }
    if (seen != nnz)
        throw ValidationError("entry count " + std::to_string(seen) +
                              " does not match declared nnz " + std::to_string(nnz) + " in " +
                              path);
    std::vector<std::string> names(n_cols);
    for (std::size_t j = 0; j < n_cols; ++j) names[j] = "g" + std::to_string(j);
    m.vocab = GeneVocabulary::from_genes(std::move(names));
    canonicalize_rows(m);
    m.validate();
    return m;
}

ExpressionMatrix load_dense_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty matrix file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2)
        throw ValidationError("dense CSV needs a cell-id column plus gene columns: " + path);
    std::vector<std::string> genes(header.begin() + 1, header.end());
    ExpressionMatrix m;
    m.n_genes = genes.size();
    m.vocab = GeneVocabulary::from_genes(std::move(genes));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != m.n_genes + 1)
            throw ValidationError("row at line " + std::to_string(lineno) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(m.n_genes + 1));
        std::vector<SparseEntry> row;
        for (std::size_t j = 1; j < fields.size(); ++j) {
            std::uint32_t count = parse_count(
                fields[j], "row " + std::to_string(lineno) + " column '" +
                               m.vocab.genes[j - 1] + "'");
            if (count > 0) row.push_back({static_cast<std::uint32_t>(j - 1), count});
        }
        m.rows.push_back(std::move(row));
    }
    m.n_cells = m.rows.size();
    m.validate();
    return m;
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated native matrix file: " + path);
    return v;
}

ExpressionMatrix load_native(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open matrix file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CFX1", 4) != 0)
        throw ValidationError("not a CFX1 matrix file: " + path);
    ExpressionMatrix m;
    m.n_cells = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
    m.n_genes = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
    auto nnz = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
    std::vector<std::uint64_t> offsets(m.n_cells + 1);
    for (auto& o : offsets) o = read_pod<std::uint64_t>(in, path);
    if (offsets.front() != 0 || offsets.back() != nnz)
        throw ValidationError("inconsistent CSR offsets in " + path);
    std::vector<std::uint32_t> cols(nnz), vals(nnz);
    in.read(reinterpret_cast<char*>(cols.data()),
            static_cast<std::streamsize>(nnz * sizeof(std::uint32_t)));
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(nnz * sizeof(std::uint32_t)));
    if (!in) throw IoError("truncated native matrix file: " + path);
    m.rows.resize(m.n_cells);
    for (std::size_t i = 0; i < m.n_cells; ++i) {
        if (offsets[i] > offsets[i + 1]) throw ValidationError("decreasing CSR offsets");
        m.rows[i].reserve(offsets[i + 1] - offsets[i]);
        for (std::uint64_t p = offsets[i]; p < offsets[i + 1]; ++p)
            m.rows[i].push_back({cols[p], vals[p]});
    }
    std::vector<std::string> names(m.n_genes);
    for (std::size_t j = 0; j < m.n_genes; ++j) {
        auto len = read_pod<std::uint32_t>(in, path);
        names[j].resize(len);
        in.read(names[j].data(), len);
        if (!in) throw IoError("truncated native matrix file: " + path);
    }
    m.vocab = GeneVocabulary::from_genes(std::move(names));
    m.validate();
    return m;
}

}  // namespace

MatrixFormat format_from_name(const std::string& name) {
    if (name == "matrix-market" || name == "mtx") return MatrixFormat::kMatrixMarket;
    if (name == "dense-csv" || name == "csv") return MatrixFormat::kDenseCsv;
    if (name == "native" || name == "cfx") return MatrixFormat::kNative;
    throw ValidationError("unknown matrix format: " + name);
}

MatrixFormat format_from_path(const std::string& path) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "mtx") return MatrixFormat::kMatrixMarket;
    if (ext == "csv") return MatrixFormat::kDenseCsv;
    if (ext == "cfx") return MatrixFormat::kNative;
    throw ValidationError("cannot infer matrix format from path: " + path);
}

ExpressionMatrix load_matrix(const std::string& path, MatrixFormat format) {
    switch (format) {
        case MatrixFormat::kMatrixMarket: return load_matrix_market(path);
        case MatrixFormat::kDenseCsv: return load_dense_csv(path);
        case MatrixFormat::kNative: return load_native(path);
    }
    throw ValidationError("unknown matrix format");
}

void save_matrix_native(const ExpressionMatrix& m, const std::string& path) {
    m.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open matrix file for writing: " + path);
    auto write_u64 = [&](std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    out.write("CFX1", 4);
    write_u64(m.n_cells);
    write_u64(m.n_genes);
    write_u64(m.nnz());
    std::uint64_t offset = 0;
    write_u64(0);
    for (const auto& row : m.rows) {
        offset += row.size();
        write_u64(offset);
    }
    for (const auto& row : m.rows)
        for (const SparseEntry& e : row)
            out.write(reinterpret_cast<const char*>(&e.gene), sizeof(e.gene));
    for (const auto& row : m.rows)
        for (const SparseEntry& e : row)
            out.write(reinterpret_cast<const char*>(&e.count), sizeof(e.count));
    for (const std::string& g : m.vocab.genes) {
        auto len = static_cast<std::uint32_t>(g.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(g.data(), static_cast<std::streamsize>(g.size()));
    }
    if (!out) throw IoError("write failed: " + path);
}

void save_matrix_market(const ExpressionMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open matrix file for writing: " + path);
    out << "%%MatrixMarket matrix coordinate integer general\n";
    out << m.n_cells << " " << m.n_genes << " " << m.nnz() << "\n";
    for (std::size_t i = 0; i < m.n_cells; ++i)
        for (const SparseEntry& e : m.rows[i])
            out << (i + 1) << " " << (e.gene + 1) << " " << e.count << "\n";
    if (!out) throw IoError("write failed: " + path);
}

CellAnnotations load_annotations(const std::string& path, std::vector<Split>* split_out) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open annotations file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty annotations file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    auto col_of = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    int ci = col_of("cell_id"), cl = col_of("label"), cs = col_of("species"),
        ct = col_of("tissue"), csp = col_of("split");
    if (cl < 0) throw ValidationError("annotations file missing 'label' column: " + path);
    std::vector<int> extra_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        int ii = static_cast<int>(i);
        if (ii != ci && ii != cl && ii != cs && ii != ct && ii != csp)
            extra_cols.push_back(ii);
    }
    CellAnnotations a;
    if (split_out) split_out->clear();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size())
            throw ValidationError("annotations row at line " + std::to_string(lineno) +
                                  " has wrong field count");
        if (ci >= 0) a.cell_ids.push_back(f[static_cast<std::size_t>(ci)]);
        a.labels.push_back(f[static_cast<std::size_t>(cl)]);
        a.species.push_back(cs >= 0 ? f[static_cast<std::size_t>(cs)] : "");
        a.tissues.push_back(ct >= 0 ? f[static_cast<std::size_t>(ct)] : "");
        for (int e : extra_cols) a.extra[header[static_cast<std::size_t>(e)]].push_back(
            f[static_cast<std::size_t>(e)]);
        if (csp >= 0 && split_out)
            split_out->push_back(split_from_name(f[static_cast<std::size_t>(csp)]));
    }
    return a;
}

void save_annotations(const CellAnnotations& a, const std::vector<Split>& split,
                      const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open annotations file for writing: " + path);
    out << "cell_id,label,species,tissue";
    if (!split.empty()) out << ",split";
    for (const auto& [key, col] : a.extra) out << "," << key;
    out << "\n";
    for (std::size_t i = 0; i < a.size(); ++i) {
        out << (i < a.cell_ids.size() ? a.cell_ids[i] : "cell" + std::to_string(i)) << ","
            << a.labels[i] << "," << a.species[i] << "," << a.tissues[i];
        if (!split.empty()) out << "," << split_name(split[i]);
        for (const auto& [key, col] : a.extra) out << "," << col[i];
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace cellforge::expr
