// Copyright Contributors to the orthofuse project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

namespace orthofuse::testing {

struct CliRun {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline std::string read_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Runs the CLI from `cwd` with ORTHOFUSE_THREADS set; stdout/stderr captured.
inline CliRun run_cli(const std::string &args, const std::filesystem::path &cwd, int threads = 1) {
    const std::filesystem::path out = cwd / ".stdout";
    const std::filesystem::path err = cwd / ".stderr";
    const std::string cmd = "cd '" + cwd.string() + "' && ORTHOFUSE_THREADS=" + std::to_string(threads) + " '" +
                            ORTHOFUSE_CLI + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    std::filesystem::remove(out);
    std::filesystem::remove(err);
    return r;
}

/// Relative path -> bytes for every regular file under `dir`.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path &dir) {
    std::map<std::string, std::string> files;
    for (const auto &e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            files[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
        }
    }
    return files;
}

inline std::filesystem::path fresh_dir(const std::string &name) {
    const std::filesystem::path p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace orthofuse::testing
