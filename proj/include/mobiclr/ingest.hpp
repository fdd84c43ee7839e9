#pragma once

#include "mobiclr/common.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mobiclr::ingest {

using Timestamp = std::int64_t;  // seconds since the Unix epoch, UTC
inline constexpr Timestamp kBinWidthSeconds = 3600;

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;
};

/// A trip endpoint: an explicit region id, a point to resolve by spatial join, or both.
struct Endpoint {
    std::optional<std::string> region_id;
    std::optional<LonLat> point;
};

struct TripRecord {
    Endpoint origin;
    Endpoint destination;
    Timestamp start_time = 0;
    Timestamp end_time = 0;
};

/// Closed ring: front() == back().
using Ring = std::vector<LonLat>;

/// One region's geometry as a set of rings evaluated with the even-odd rule,
/// so holes and multipolygon parts need no special casing.
using RingSet = std::vector<Ring>;

class RegionSet {
public:
    explicit RegionSet(std::vector<std::string> ids);
    RegionSet(std::vector<std::string> ids, std::vector<RingSet> polygons);

    const std::vector<std::string>& ids() const { return ids_; }
    std::size_t size() const { return ids_.size(); }
    bool has_polygons() const { return !polygons_.empty(); }
    const std::vector<RingSet>& polygons() const { return polygons_; }

    std::optional<std::size_t> index_of(const std::string& id) const;

private:
    std::vector<std::string> ids_;
    std::vector<RingSet> polygons_;
    std::vector<std::pair<std::string, std::size_t>> sorted_;  // id -> index
};

/// Even-odd containment of a point in a ring set; points on an edge count as inside.
bool contains(const RingSet& rings, LonLat p);

/// Index of the first region (in id order) containing the point.
std::optional<std::size_t> spatial_join_index(LonLat point, const RegionSet& regions);
std::optional<std::string> spatial_join(LonLat point, const RegionSet& regions);

/// Hourly counts, N x T x 2 stored as N row-major T x 2 blocks.
struct MobilitySeries {
    static constexpr int kInbound = 0;
    static constexpr int kOutbound = 1;

    std::vector<std::string> region_ids;
    Timestamp time_origin = 0;
    std::int64_t hours = 0;
    std::vector<std::int64_t> counts;  // index ((n * hours) + t) * 2 + c

    std::int64_t& at(std::size_t n, std::int64_t t, int c) {
        return counts[(n * static_cast<std::size_t>(hours) + static_cast<std::size_t>(t)) * 2 + c];
    }
    std::int64_t at(std::size_t n, std::int64_t t, int c) const {
        return counts[(n * static_cast<std::size_t>(hours) + static_cast<std::size_t>(t)) * 2 + c];
    }
    std::size_t regions() const { return region_ids.size(); }
};

struct BinDiagnostics {
    std::int64_t trips = 0;
    std::int64_t unresolved_origin = 0;
    std::int64_t unresolved_destination = 0;
    std::int64_t outbound_outside_window = 0;
    std::int64_t inbound_outside_window = 0;
};

/// Bins trips into hourly inbound (end_time at destination) and outbound
/// (start_time at origin) counts. Parallel over trip chunks; chunk results
/// are merged by elementwise addition.
MobilitySeries bin_trips(const std::vector<TripRecord>& trips, const RegionSet& regions,
                         Timestamp window_start, Timestamp window_end,
                         BinDiagnostics* diagnostics = nullptr);

/// Single-threaded reference for bin_trips.
MobilitySeries bin_trips_serial(const std::vector<TripRecord>& trips, const RegionSet& regions,
                                Timestamp window_start, Timestamp window_end,
                                BinDiagnostics* diagnostics = nullptr);

/// Per-region, per-channel z-scored series.
struct NormalizedSeries {
    std::vector<std::string> region_ids;
    std::vector<Mat> values;  // one T x 2 matrix per region (col 0 inbound, col 1 outbound)
    Mat means;                // N x 2
    Mat stds;                 // N x 2, population std

    std::size_t regions() const { return values.size(); }
    Eigen::Index hours() const { return values.empty() ? 0 : values.front().rows(); }
};

/// Population z-score over time; zero-variance channels map to zeros.
NormalizedSeries zscore(const MobilitySeries& series);
NormalizedSeries zscore(const NormalizedSeries& series);

/// Wraps an already-real series without normalizing it (means 0, stds 1).
NormalizedSeries as_real(const MobilitySeries& series);

/// z-score of one column vector with the same rules as zscore().
Vec zscore_column(const Vec& x, double* mean = nullptr, double* std = nullptr);

// ---- file formats -------------------------------------------------------

/// Parses ISO-8601 (YYYY-MM-DD[T ]HH:MM[:SS][Z|+HH:MM]) or integer epoch seconds.
Timestamp parse_timestamp(const std::string& text);
std::string format_timestamp(Timestamp ts);

struct TripCsvOptions {
    char delimiter = ',';
};

struct TripCsvResult {
    std::vector<TripRecord> trips;
    std::int64_t rows_read = 0;
    std::int64_t rows_rejected = 0;
};

/// Reads trip records. Throws FormatError naming a missing column, or the
/// line number of an unparseable row.
TripCsvResult read_trips_csv(const std::filesystem::path& path, const TripCsvOptions& options = {});

/// Reads a GeoJSON FeatureCollection (Polygon / MultiPolygon features with an
/// "id" property) or a plain text list of ids, one per line.
RegionSet read_regions(const std::filesystem::path& path);
RegionSet parse_geojson_regions(const std::string& text);

void write_series(const std::filesystem::path& path, const MobilitySeries& series,
                  const std::string& config_hash = {});
MobilitySeries read_series(const std::filesystem::path& path);

/// region_id,hour,inbound,outbound
void write_series_csv(const std::filesystem::path& path, const MobilitySeries& series);

}  // namespace mobiclr::ingest
