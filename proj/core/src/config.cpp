/*
 * This file is open source software, licensed to you under the terms
 * of the Apache License, Version 2.0 (the "License").  See the NOTICE file
 * distributed with this work for additional information regarding copyright
 * ownership.  You may not use this file except in compliance with the License.
 *
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing,
 * software distributed under the License is distributed on an
 * "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied.  See the License for the
 * specific language governing permissions and limitations
 * under the License.
 */

#include "pno/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pno {

std::string_view errc_name(Errc e) noexcept {
    switch (e) {
    case Errc::ok: return "ok";
    case Errc::queue_full: return "queue_full";
    case Errc::range_error: return "range_error";
    case Errc::empty_batch: return "empty_batch";
    case Errc::ring_full: return "ring_full";
    case Errc::invalid_flag: return "invalid_flag";
    case Errc::already_committed: return "already_committed";
    case Errc::not_synchronous_kind: return "not_synchronous_kind";
    case Errc::data_ring_full: return "data_ring_full";
    case Errc::empty_payload: return "empty_payload";
    case Errc::would_block: return "would_block";
    case Errc::ordering_violation: return "ordering_violation";
    case Errc::addr_in_use: return "addr_in_use";
    case Errc::no_route: return "no_route";
    case Errc::window_full: return "window_full";
    case Errc::conn_closed: return "conn_closed";
    case Errc::conn_refused: return "conn_refused";
    case Errc::unknown_seq: return "unknown_seq";
    case Errc::bad_fd: return "bad_fd";
    case Errc::bad_epfd: return "bad_epfd";
    case Errc::parse_error: return "parse_error";
    case Errc::io_error: return "io_error";
    }
    return "unknown";
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

} // namespace

Result<Config> Config::parse_string(std::string_view text) {
    Config cfg;
    std::string section;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

        if (size_t c = line.find_first_of("#;"); c != std::string_view::npos) {
            line = line.substr(0, c);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                return Errc::parse_error;
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            return Errc::parse_error;
        }
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            return Errc::parse_error;
        }
        if (!section.empty() && key.find('.') == std::string::npos) {
            key = section + "." + key;
        }
        cfg.kv_[key] = value;
    }
    return cfg;
}

Result<Config> Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        return Errc::io_error;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string Config::get_str(const std::string& key, std::string fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double Config::get_f64(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        return fallback;
    }
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    return end != it->second.c_str() ? v : fallback;
}

int64_t Config::get_i64(const std::string& key, int64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        return fallback;
    }
    char* end = nullptr;
    long long v = std::strtoll(it->second.c_str(), &end, 0);
    return end != it->second.c_str() ? v : fallback;
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        return fallback;
    }
    char* end = nullptr;
    unsigned long long v = std::strtoull(it->second.c_str(), &end, 0);
    return end != it->second.c_str() ? v : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        return fallback;
    }
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    return fallback;
}

void Config::set(const std::string& key, std::string value) { kv_[key] = std::move(value); }

std::string Config::dump() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

} // namespace pno
