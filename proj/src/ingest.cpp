#include "mobiclr/ingest.hpp"

#include "mobiclr/container.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mobiclr::ingest {

// ---- regions --------------------------------------------------------------

RegionSet::RegionSet(std::vector<std::string> ids) : RegionSet(std::move(ids), {}) {}

RegionSet::RegionSet(std::vector<std::string> ids, std::vector<RingSet> polygons)
    : ids_(std::move(ids)), polygons_(std::move(polygons)) {
    if (ids_.empty()) throw ArgumentError("RegionSet needs at least one region");
    if (!polygons_.empty() && polygons_.size() != ids_.size())
        throw ArgumentError("RegionSet: polygon count does not match id count");
    for (std::size_t r = 0; r < polygons_.size(); ++r) {
        for (const Ring& ring : polygons_[r]) {
            if (ring.size() < 4 || ring.front().lon != ring.back().lon || ring.front().lat != ring.back().lat)
                throw ArgumentError("RegionSet: ring of region '" + ids_[r] + "' is not closed");
        }
    }
    sorted_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) sorted_.emplace_back(ids_[i], i);
    std::sort(sorted_.begin(), sorted_.end());
    for (std::size_t i = 1; i < sorted_.size(); ++i)
        if (sorted_[i].first == sorted_[i - 1].first)
            throw ArgumentError("RegionSet: duplicate region id '" + sorted_[i].first + "'");
}

std::optional<std::size_t> RegionSet::index_of(const std::string& id) const {
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), id,
                               [](const auto& entry, const std::string& key) { return entry.first < key; });
    if (it == sorted_.end() || it->first != id) return std::nullopt;
    return it->second;
}

namespace {

bool on_segment(LonLat p, LonLat a, LonLat b) {
    const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    const double scale = std::max({std::abs(b.lon - a.lon), std::abs(b.lat - a.lat), 1.0});
    if (std::abs(cross) > 1e-12 * scale) return false;
    return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
           p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

}  // namespace

bool contains(const RingSet& rings, LonLat p) {
    bool inside = false;
    for (const Ring& ring : rings) {
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const LonLat& a = ring[i];
            const LonLat& b = ring[j];
            if (on_segment(p, a, b)) return true;
            if ((a.lat > p.lat) != (b.lat > p.lat)) {
                const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if (p.lon < x) inside = !inside;
            }
        }
    }
    return inside;
}

std::optional<std::size_t> spatial_join_index(LonLat point, const RegionSet& regions) {
    if (!regions.has_polygons()) throw ConfigError("spatial join requires region polygons");
    const auto& polys = regions.polygons();
    for (std::size_t r = 0; r < polys.size(); ++r)
        if (contains(polys[r], point)) return r;
    return std::nullopt;
}

std::optional<std::string> spatial_join(LonLat point, const RegionSet& regions) {
    if (auto idx = spatial_join_index(point, regions)) return regions.ids()[*idx];
    return std::nullopt;
}

// ---- binning --------------------------------------------------------------

namespace {

std::optional<std::size_t> resolve(const Endpoint& e, const RegionSet& regions) {
    if (e.region_id) return regions.index_of(*e.region_id);
    if (e.point && regions.has_polygons()) return spatial_join_index(*e.point, regions);
    return std::nullopt;
}

std::int64_t hours_in_window(Timestamp start, Timestamp end) {
    if (end <= start) throw ArgumentError("bin_trips: window_end must be after window_start");
    if ((end - start) % kBinWidthSeconds != 0)
        throw ArgumentError("bin_trips: window length must be a whole number of hours");
    return (end - start) / kBinWidthSeconds;
}

MobilitySeries empty_series(const RegionSet& regions, Timestamp start, std::int64_t hours) {
    MobilitySeries s;
    s.region_ids = regions.ids();
    s.time_origin = start;
    s.hours = hours;
    s.counts.assign(regions.size() * static_cast<std::size_t>(hours) * 2, 0);
    return s;
}

void bin_range(const std::vector<TripRecord>& trips, std::size_t begin, std::size_t end,
               const RegionSet& regions, Timestamp window_start, MobilitySeries& out, BinDiagnostics& diag) {
    auto bin_of = [&](Timestamp ts) -> std::int64_t {
        if (ts < window_start) return -1;
        const std::int64_t b = (ts - window_start) / kBinWidthSeconds;
        return b < out.hours ? b : -1;
    };
    for (std::size_t k = begin; k < end; ++k) {
        const TripRecord& trip = trips[k];
        ++diag.trips;
        if (auto o = resolve(trip.origin, regions)) {
            if (auto b = bin_of(trip.start_time); b >= 0)
                ++out.at(*o, b, MobilitySeries::kOutbound);
            else
                ++diag.outbound_outside_window;
        } else {
            ++diag.unresolved_origin;
        }
        if (auto d = resolve(trip.destination, regions)) {
            if (auto b = bin_of(trip.end_time); b >= 0)
                ++out.at(*d, b, MobilitySeries::kInbound);
            else
                ++diag.inbound_outside_window;
        } else {
            ++diag.unresolved_destination;
        }
    }
}

void add_into(BinDiagnostics& into, const BinDiagnostics& d) {
    into.trips += d.trips;
    into.unresolved_origin += d.unresolved_origin;
    into.unresolved_destination += d.unresolved_destination;
    into.outbound_outside_window += d.outbound_outside_window;
    into.inbound_outside_window += d.inbound_outside_window;
}

}  // namespace

MobilitySeries bin_trips_serial(const std::vector<TripRecord>& trips, const RegionSet& regions,
                                Timestamp window_start, Timestamp window_end, BinDiagnostics* diagnostics) {
    const auto hours = hours_in_window(window_start, window_end);
    MobilitySeries out = empty_series(regions, window_start, hours);
    BinDiagnostics diag;
    bin_range(trips, 0, trips.size(), regions, window_start, out, diag);
    if (diagnostics) *diagnostics = diag;
    return out;
}

MobilitySeries bin_trips(const std::vector<TripRecord>& trips, const RegionSet& regions,
                         Timestamp window_start, Timestamp window_end, BinDiagnostics* diagnostics) {
    const auto hours = hours_in_window(window_start, window_end);
    int shards = 1;
#ifdef _OPENMP
    shards = std::max(1, omp_get_max_threads());
#endif
    if (shards == 1 || trips.size() < 4096)
        return bin_trips_serial(trips, regions, window_start, window_end, diagnostics);

    std::vector<MobilitySeries> partial(shards, empty_series(regions, window_start, hours));
    std::vector<BinDiagnostics> partial_diag(shards);
    const std::size_t chunk = (trips.size() + shards - 1) / shards;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < shards; ++s) {
        const std::size_t begin = std::min(trips.size(), s * chunk);
        const std::size_t end = std::min(trips.size(), begin + chunk);
        bin_range(trips, begin, end, regions, window_start, partial[s], partial_diag[s]);
    }
    MobilitySeries out = std::move(partial[0]);
    BinDiagnostics diag = partial_diag[0];
    for (int s = 1; s < shards; ++s) {
        for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += partial[s].counts[i];
        add_into(diag, partial_diag[s]);
    }
    if (diagnostics) *diagnostics = diag;
    return out;
}

// ---- normalization ----------------------------------------------------------

Vec zscore_column(const Vec& x, double* mean_out, double* std_out) {
    if (x.size() < 1) throw ArgumentError("zscore: series must have at least one timestep");
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    const double sd = std::sqrt(var);
    if (mean_out) *mean_out = mean;
    if (std_out) *std_out = sd;
    // Channels whose spread is pure rounding noise count as constant.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return Vec::Zero(x.size());
    return (x.array() - mean) / sd;
}

NormalizedSeries zscore(const NormalizedSeries& series) {
    NormalizedSeries out;
    out.region_ids = series.region_ids;
    const auto n = static_cast<Eigen::Index>(series.regions());
    out.means = Mat::Zero(n, 2);
    out.stds = Mat::Zero(n, 2);
    out.values.resize(series.regions());
    for (Eigen::Index r = 0; r < n; ++r) {
        const Mat& v = series.values[r];
        Mat z(v.rows(), v.cols());
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            double m = 0.0;
            double s = 0.0;
            z.col(c) = zscore_column(v.col(c), &m, &s);
            out.means(r, c) = m;
            out.stds(r, c) = s;
        }
        out.values[r] = std::move(z);
    }
    return out;
}

NormalizedSeries as_real(const MobilitySeries& series) {
    NormalizedSeries out;
    out.region_ids = series.region_ids;
    const auto n = static_cast<Eigen::Index>(series.regions());
    out.means = Mat::Zero(n, 2);
    out.stds = Mat::Ones(n, 2);
    out.values.resize(series.regions());
    for (std::size_t r = 0; r < series.regions(); ++r) {
        Mat v(series.hours, 2);
        for (std::int64_t t = 0; t < series.hours; ++t)
            for (int c = 0; c < 2; ++c) v(t, c) = static_cast<double>(series.at(r, t, c));
        out.values[r] = std::move(v);
    }
    return out;
}

NormalizedSeries zscore(const MobilitySeries& series) {
    if (series.hours < 1) throw ArgumentError("zscore: series must have at least one timestep");
    return zscore(as_real(series));
}

// ---- timestamps -------------------------------------------------------------

namespace {

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

}  // namespace

Timestamp parse_timestamp(const std::string& raw) {
    const std::string text = trim(raw);
    if (text.empty()) throw FormatError("empty timestamp");
    {
        Timestamp v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc{} && ptr == text.data() + text.size()) return v;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10)
        throw FormatError("unparseable timestamp '" + text + "'");
    std::size_t pos = 10;
    if (pos < text.size()) {
        if (text[pos] != 'T' && text[pos] != ' ') throw FormatError("unparseable timestamp '" + text + "'");
        ++pos;
        int n = 0;
        if (std::sscanf(text.c_str() + pos, "%2d:%2d%n", &h, &mi, &n) != 2)
            throw FormatError("unparseable timestamp '" + text + "'");
        pos += n;
        if (pos < text.size() && text[pos] == ':') {
            if (std::sscanf(text.c_str() + pos, ":%2d%n", &s, &n) != 1)
                throw FormatError("unparseable timestamp '" + text + "'");
            pos += n;
            if (pos < text.size() && text[pos] == '.') {  // fractional seconds are truncated
                ++pos;
                while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
            }
        }
    }
    Timestamp offset = 0;
    if (pos < text.size()) {
        const char sign = text[pos];
        if (sign == 'Z' && pos + 1 == text.size()) {
            pos = text.size();
        } else if (sign == '+' || sign == '-') {
            int oh = 0, om = 0;
            if (std::sscanf(text.c_str() + pos + 1, "%2d:%2d", &oh, &om) != 2)
                throw FormatError("unparseable timestamp offset in '" + text + "'");
            offset = (sign == '+' ? 1 : -1) * (oh * 3600 + om * 60);
            pos = text.size();
        } else {
            throw FormatError("unparseable timestamp '" + text + "'");
        }
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
        throw FormatError("timestamp out of range '" + text + "'");
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 + mi * 60 + s -
           offset;
}

std::string format_timestamp(Timestamp ts) {
    std::int64_t days = ts / 86400;
    std::int64_t rem = ts % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    std::int64_t y = 0;
    unsigned m = 0, d = 0;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

// ---- trip CSV ---------------------------------------------------------------

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == delim && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace

TripCsvResult read_trips_csv(const std::filesystem::path& path, const TripCsvOptions& options) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open trips file " + path.string());
    TripCsvResult result;
    std::string line;
    if (!std::getline(is, line)) return result;  // empty file: no header, no trips

    const auto header = split(line, options.delimiter);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    auto require = [&](const std::string& name) -> std::size_t {
        auto it = col.find(name);
        if (it == col.end()) throw FormatError("trips file " + path.string() + ": missing column '" + name + "'");
        return it->second;
    };
    const std::size_t c_start = require("start_time");
    const std::size_t c_end = require("end_time");
    const bool ids = col.count("origin_id") || col.count("dest_id");
    const bool points = col.count("origin_lon") || col.count("dest_lon");
    if (!ids && !points) require("origin_id");
    std::optional<std::size_t> c_oid, c_did, c_olon, c_olat, c_dlon, c_dlat;
    if (ids) {
        c_oid = require("origin_id");
        c_did = require("dest_id");
    }
    if (points) {
        c_olon = require("origin_lon");
        c_olat = require("origin_lat");
        c_dlon = require("dest_lon");
        c_dlat = require("dest_lat");
    }

    std::int64_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++result.rows_read;
        const auto f = split(line, options.delimiter);
        if (f.size() < header.size())
            throw FormatError("trips file " + path.string() + ": line " + std::to_string(line_no) + " has " +
                              std::to_string(f.size()) + " fields, expected " + std::to_string(header.size()));
        TripRecord trip;
        try {
            trip.start_time = parse_timestamp(f[c_start]);
            trip.end_time = parse_timestamp(f[c_end]);
        } catch (const FormatError& e) {
            throw FormatError("trips file " + path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (trip.end_time < trip.start_time) {
            ++result.rows_rejected;
            continue;
        }
        auto endpoint = [&](const std::optional<std::size_t>& id, const std::optional<std::size_t>& lon,
                            const std::optional<std::size_t>& lat) {
            Endpoint e;
            if (id && !f[*id].empty()) e.region_id = f[*id];
            if (lon && lat) {
                auto x = parse_double(f[*lon]);
                auto y = parse_double(f[*lat]);
                if (x && y) e.point = LonLat{*x, *y};
            }
            return e;
        };
        trip.origin = endpoint(c_oid, c_olon, c_olat);
        trip.destination = endpoint(c_did, c_dlon, c_dlat);
        result.trips.push_back(std::move(trip));
    }
    return result;
}

// ---- regions I/O ------------------------------------------------------------

namespace {

Ring parse_ring(const nlohmann::json& coords) {
    Ring ring;
    for (const auto& pt : coords) ring.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    if (!ring.empty() && (ring.front().lon != ring.back().lon || ring.front().lat != ring.back().lat))
        ring.push_back(ring.front());
    return ring;
}

std::string feature_id(const nlohmann::json& feature) {
    auto as_string = [](const nlohmann::json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (feature.contains("properties") && feature["properties"].is_object() && feature["properties"].contains("id"))
        return as_string(feature["properties"]["id"]);
    if (feature.contains("id")) return as_string(feature["id"]);
    throw FormatError("GeoJSON feature without an id property");
}

}  // namespace

RegionSet parse_geojson_regions(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid GeoJSON: ") + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection") throw FormatError("GeoJSON root must be a FeatureCollection");
    std::vector<std::string> ids;
    std::vector<RingSet> polys;
    try {
        for (const auto& feature : doc.at("features")) {
            const auto& geom = feature.at("geometry");
            const std::string type = geom.at("type").get<std::string>();
            RingSet rings;
            if (type == "Polygon") {
                for (const auto& r : geom.at("coordinates")) rings.push_back(parse_ring(r));
            } else if (type == "MultiPolygon") {
                for (const auto& poly : geom.at("coordinates"))
                    for (const auto& r : poly) rings.push_back(parse_ring(r));
            } else {
                throw FormatError("unsupported GeoJSON geometry type '" + type + "'");
            }
            ids.push_back(feature_id(feature));
            polys.push_back(std::move(rings));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed GeoJSON feature: ") + e.what());
    }
    return RegionSet(std::move(ids), std::move(polys));
}

RegionSet read_regions(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open regions file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_geojson_regions(text);

    std::vector<std::string> ids;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        auto id = trim(line);
        if (!id.empty() && id[0] != '#') ids.push_back(id);
    }
    return RegionSet(std::move(ids));
}

// ---- series I/O -------------------------------------------------------------

void write_series(const std::filesystem::path& path, const MobilitySeries& series, const std::string& config_hash) {
    container::Blob blob;
    blob.header = {{"kind", "mobility_series"},
                   {"shape", {series.regions(), series.hours, 2}},
                   {"channels", {"inbound", "outbound"}},
                   {"region_ids", series.region_ids},
                   {"time_origin", series.time_origin},
                   {"time_origin_iso", format_timestamp(series.time_origin)},
                   {"bin_width_seconds", kBinWidthSeconds}};
    if (!config_hash.empty()) blob.header["config_hash"] = config_hash;
    blob.payload = series.counts;
    container::write(path, blob);
}

MobilitySeries read_series(const std::filesystem::path& path) {
    auto blob = container::read_kind(path, "mobility_series");
    MobilitySeries s;
    try {
        s.region_ids = blob.header.at("region_ids").get<std::vector<std::string>>();
        s.time_origin = blob.header.at("time_origin").get<Timestamp>();
        const auto shape = blob.header.at("shape").get<std::vector<std::int64_t>>();
        if (shape.size() != 3 || shape[2] != 2 || shape[0] != static_cast<std::int64_t>(s.region_ids.size()))
            throw FormatError(path.string() + ": inconsistent series shape");
        s.hours = shape[1];
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad series header: " + e.what());
    }
    auto* counts = std::get_if<std::vector<std::int64_t>>(&blob.payload);
    if (!counts || counts->size() != s.region_ids.size() * static_cast<std::size_t>(s.hours) * 2)
        throw FormatError(path.string() + ": series payload has the wrong type or size");
    s.counts = std::move(*counts);
    return s;
}

void write_series_csv(const std::filesystem::path& path, const MobilitySeries& series) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string());
    os << "region_id,hour,timestamp,inbound,outbound\n";
    for (std::size_t n = 0; n < series.regions(); ++n)
        for (std::int64_t t = 0; t < series.hours; ++t)
            os << series.region_ids[n] << ',' << t << ','
               << format_timestamp(series.time_origin + t * kBinWidthSeconds) << ','
               << series.at(n, t, MobilitySeries::kInbound) << ',' << series.at(n, t, MobilitySeries::kOutbound)
               << '\n';
}

}  // namespace mobiclr::ingest
