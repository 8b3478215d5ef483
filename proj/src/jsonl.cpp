#include "perturbrag/jsonl.hpp"

#include "perturbrag/errors.hpp"

#include <fstream>
#include <sstream>

namespace perturbrag::jsonl {

namespace {

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

} // namespace

void for_each(const std::filesystem::path& path,
              const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_blank(line)) {
            continue;
        }
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string() + ": malformed JSON (" + e.what() + ")", lineno);
        }
        try {
            fn(record, lineno);
        } catch (const ParseError& e) {
            if (e.line != 0) {
                throw;
            }
            throw ParseError(path.string() + ": " + e.what(), lineno);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno);
        }
    }
}

std::string dump(const nlohmann::json& record) {
    // nlohmann::json objects are std::map-backed, so keys come out sorted.
    return record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void write(const std::filesystem::path& path, const std::vector<nlohmann::json>& records) {
    std::ostringstream out;
    for (const auto& r : records) {
        out << dump(r) << '\n';
    }
    write_text(path, out.str());
}

void append(const std::filesystem::path& path, const nlohmann::json& record) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) {
        throw NotFoundError("cannot open " + path.string() + " for append");
    }
    out << dump(record) << '\n';
    out.flush();
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw NotFoundError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw NotFoundError("cannot open " + path.string() + " for writing");
    }
    out << text;
}

std::string require_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw ParseError(std::string("missing or non-string field \"") + key + "\"");
    }
    return it->get<std::string>();
}

const nlohmann::json& require_array(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array()) {
        throw ParseError(std::string("missing or non-array field \"") + key + "\"");
    }
    return *it;
}

} // namespace perturbrag::jsonl
