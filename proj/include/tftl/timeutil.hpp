#pragma once

#include <cstdint>
#include <string>

namespace tftl {

// Civil <-> epoch-day conversions (Howard Hinnant's algorithms), UTC only.
std::int64_t days_from_civil(int year, unsigned month, unsigned day);
void civil_from_days(std::int64_t days, int* year, unsigned* month, unsigned* day);

// ISO-8601 UTC timestamps of the form 2022-05-01T00:00:00Z.
std::string format_timestamp(std::int64_t epoch_sec);
std::int64_t parse_timestamp(const std::string& text);  // ErrorKind::Ingestion on malformed input

}  // namespace tftl
