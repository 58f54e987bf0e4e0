#include "nofas/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nofas/tensor.hpp"

namespace nofas::io {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string matrix_csv(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) os << ',';
        os << header[i];
    }
    os << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << format_double(row[i]);
        }
        os << '\n';
    }
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io: cannot open " + path + " for writing");
    out << content;
    if (!out) throw Error("io: write failed for " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string create_run_directory(const std::string& root, const std::string& stem) {
    namespace fs = std::filesystem;
    fs::create_directories(root);
    for (int i = 0; i < 100000; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "-%03d", i);
        fs::path dir = fs::path(root) / (stem + buf);
        if (!fs::exists(dir)) {
            fs::create_directories(dir);
            return dir.string();
        }
    }
    throw Error("io: could not find a free run directory under " + root);
}

}  // namespace nofas::io
