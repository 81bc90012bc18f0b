#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace imblab {

// Shortest round-trip decimal representation (std::to_chars). All floats in
// emitted artifacts go through this so reruns are byte-identical.
std::string format_double(double v);
double parse_double(std::string_view s);

// FNV-1a over raw bytes; digests in artifacts are the 16-char lowercase hex.
uint64_t fnv1a64(std::string_view bytes);
std::string digest_hex(std::string_view bytes);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

// Minimal CSV with quoting for fields containing comma/quote/newline.
using CsvRow = std::vector<std::string>;
std::string csv_format(const std::vector<CsvRow>& rows);
std::vector<CsvRow> csv_parse(std::string_view text);
void write_csv(const std::string& path, const std::vector<CsvRow>& rows);

}  // namespace imblab
