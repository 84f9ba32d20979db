#pragma once

#include <string>

#include "tftl/timeseries.hpp"

namespace tftl {

// Frame CSV: first column `timestamp` (ISO-8601 UTC), one column per channel,
// empty cell = missing. The sidecar manifest (JSON) declares the domain plus
// channel kinds and cumulative flags, in column order.
void write_frame_csv(const TimeSeriesFrame& frame, const std::string& csv_path);
void write_manifest_json(const TimeSeriesFrame& frame, const std::string& json_path);

// Reads a CSV + manifest pair back as a raw (possibly irregular) series;
// resample_hourly turns it into a frame.
RawSeries read_series_csv(const std::string& csv_path, const std::string& manifest_path);

void write_scaler_json(const ScalerParams& scaler, const std::string& path);
ScalerParams read_scaler_json(const std::string& path);

}  // namespace tftl
