#ifndef NOFAS_IO_HPP
#define NOFAS_IO_HPP

#include <string>
#include <vector>

namespace nofas::io {

/// All floats are written with 17 significant digits so a round trip through
/// text is lossless for 64-bit values.
std::string format_double(double v);

std::string matrix_csv(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Creates <root>/<stem>-NNN with the first unused NNN; never reuses an
/// existing run directory.
std::string create_run_directory(const std::string& root, const std::string& stem);

}  // namespace nofas::io

#endif
