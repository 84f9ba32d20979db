#include "tftl/csvio.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "tftl/timeutil.hpp"

namespace tftl {

namespace {

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::Contract, "cannot open '" + path + "' for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Contract, "cannot open '" + path + "' for reading");
    return in;
}

}  // namespace

void write_frame_csv(const TimeSeriesFrame& frame, const std::string& csv_path) {
    std::ofstream out = open_out(csv_path);
    out << "timestamp";
    for (const Channel& c : frame.channels) {
        out << ',' << c.name;
    }
    out << '\n';
    const int T = frame.rows();
    const int C = frame.cols();
    for (int t = 0; t < T; ++t) {
        out << format_timestamp(frame.epoch_at(t));
        for (int c = 0; c < C; ++c) {
            out << ',';
            if (frame.observed(t, c)) {
                out << format_value(frame.value(t, c));
            }
        }
        out << '\n';
    }
    require(out.good(), ErrorKind::Contract, "failed writing '" + csv_path + "'");
}

void write_manifest_json(const TimeSeriesFrame& frame, const std::string& json_path) {
    nlohmann::json j;
    j["domain"] = frame.domain;
    j["start"] = format_timestamp(frame.start_epoch_sec);
    nlohmann::json channels = nlohmann::json::array();
    for (const Channel& c : frame.channels) {
        channels.push_back({{"name", c.name},
                            {"kind", channel_kind_name(c.kind)},
                            {"cumulative", c.cumulative}});
    }
    j["channels"] = channels;
    std::ofstream out = open_out(json_path);
    out << j.dump(2) << '\n';
}

RawSeries read_series_csv(const std::string& csv_path, const std::string& manifest_path) {
    nlohmann::json manifest;
    {
        std::ifstream in = open_in(manifest_path);
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorKind::Ingestion, "manifest '" + manifest_path + "': " + e.what());
        }
    }
    RawSeries raw;
    raw.domain = manifest.value("domain", std::string("unknown"));
    std::vector<Channel> declared;
    for (const auto& c : manifest.at("channels")) {
        Channel channel;
        channel.name = c.at("name").get<std::string>();
        channel.kind = channel_kind_from_name(c.at("kind").get<std::string>());
        channel.cumulative = c.value("cumulative", false);
        declared.push_back(std::move(channel));
    }

    std::ifstream in = open_in(csv_path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Ingestion,
            "empty CSV '" + csv_path + "'");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            header.push_back(cell);
        }
    }
    require(!header.empty() && header[0] == "timestamp", ErrorKind::Ingestion,
            "CSV '" + csv_path + "': first column must be 'timestamp'");
    require(header.size() == declared.size() + 1, ErrorKind::Ingestion,
            "CSV '" + csv_path + "': column count does not match manifest");
    for (std::size_t i = 0; i < declared.size(); ++i) {
        require(header[i + 1] == declared[i].name, ErrorKind::Ingestion,
                "CSV '" + csv_path + "': column '" + header[i + 1] +
                    "' does not match manifest channel '" + declared[i].name + "'");
    }
    raw.channels = declared;

    const int C = static_cast<int>(declared.size());
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        require(static_cast<bool>(std::getline(ss, cell, ',')), ErrorKind::Ingestion,
                "CSV '" + csv_path + "': malformed line " + std::to_string(line_no));
        raw.timestamps.push_back(parse_timestamp(cell));
        for (int c = 0; c < C; ++c) {
            if (!std::getline(ss, cell, ',')) {
                cell.clear();
            }
            if (cell.empty()) {
                raw.values.push_back(std::numeric_limits<double>::quiet_NaN());
            } else {
                try {
                    raw.values.push_back(std::stod(cell));
                } catch (const std::exception&) {
                    raise(ErrorKind::Ingestion, "CSV '" + csv_path + "': bad number '" + cell +
                                                    "' at line " + std::to_string(line_no));
                }
            }
        }
    }
    require(!raw.timestamps.empty(), ErrorKind::Ingestion, "CSV '" + csv_path + "': no data rows");
    return raw;
}

void write_scaler_json(const ScalerParams& scaler, const std::string& path) {
    nlohmann::json j;
    j["domain"] = scaler.domain;
    j["fitted_on_training"] = scaler.fitted_on_training;
    nlohmann::json channels = nlohmann::json::object();
    for (const auto& [name, mm] : scaler.channels) {
        channels[name] = {{"min", mm.min}, {"max", mm.max}};
    }
    j["channels"] = channels;
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

ScalerParams read_scaler_json(const std::string& path) {
    std::ifstream in = open_in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Ingestion, "scaler '" + path + "': " + e.what());
    }
    ScalerParams scaler;
    scaler.domain = j.value("domain", std::string("unknown"));
    scaler.fitted_on_training = j.value("fitted_on_training", false);
    for (const auto& [name, mm] : j.at("channels").items()) {
        scaler.channels.push_back(
            {name, {mm.at("min").get<double>(), mm.at("max").get<double>()}});
    }
    return scaler;
}

}  // namespace tftl
