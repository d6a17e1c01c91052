#pragma once

// Per-epoch loss records and their CSV form:
//
//   epoch,train_loss,val_loss,test_loss[,component...]
//
// Values are printed with 17 significant digits so that parsing the file
// reproduces the in-memory doubles exactly. Missing values (an empty split)
// are written as "nan".

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mrsr/core/error.hpp"

namespace mrsr::train {

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> components;  // training-epoch means, named by the run record
    double seconds = 0.0;            // wall clock, not part of the CSV
};

struct TrainRunRecord {
    std::string phase;
    std::uint64_t seed = 0;
    std::string config_snapshot;
    std::vector<std::string> component_names;
    std::vector<EpochRecord> epochs;
    std::string checkpoint;  // prefix of the written checkpoint

    double final_train_loss() const {
        if (epochs.empty()) throw UsageError("run record has no epochs");
        return epochs.back().train_loss;
    }
};

inline std::string format_loss(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline double parse_loss(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("loss CSV: cannot parse value '" + s + "'");
    }
}

inline void write_loss_csv(const TrainRunRecord& record, std::ostream& out) {
    if (record.epochs.empty()) throw UsageError("emit_loss_csv: record has no epochs");
    out << "epoch,train_loss,val_loss,test_loss";
    for (const auto& n : record.component_names) out << ',' << n;
    out << '\n';
    for (const auto& e : record.epochs) {
        if (e.components.size() != record.component_names.size()) {
            throw DimensionError("emit_loss_csv: epoch " + std::to_string(e.epoch) + " has " +
                                 std::to_string(e.components.size()) + " components, header has " +
                                 std::to_string(record.component_names.size()));
        }
        out << e.epoch << ',' << format_loss(e.train_loss) << ',' << format_loss(e.val_loss) << ','
            << format_loss(e.test_loss);
        for (double c : e.components) out << ',' << format_loss(c);
        out << '\n';
    }
}

inline void emit_loss_csv(const TrainRunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write loss CSV " + path);
    write_loss_csv(record, out);
    if (!out) throw IoError("failed writing loss CSV " + path);
}

/// Reads the epochs and component names back (phase, seed and timing are not stored in the CSV).
inline TrainRunRecord parse_loss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingPathError("loss CSV not found: " + path);
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw DataError("loss CSV is empty: " + path);
    const auto header = split(line);
    if (header.size() < 4 || header[0] != "epoch" || header[1] != "train_loss" || header[2] != "val_loss" ||
        header[3] != "test_loss") {
        throw DataError("loss CSV has an unexpected header: " + line);
    }
    TrainRunRecord r;
    r.component_names.assign(header.begin() + 4, header.end());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) throw DataError("loss CSV row has the wrong number of cells: " + line);
        EpochRecord e;
        e.epoch = static_cast<std::size_t>(std::stoull(cells[0]));
        e.train_loss = parse_loss(cells[1]);
        e.val_loss = parse_loss(cells[2]);
        e.test_loss = parse_loss(cells[3]);
        for (std::size_t i = 4; i < cells.size(); ++i) e.components.push_back(parse_loss(cells[i]));
        r.epochs.push_back(std::move(e));
    }
    return r;
}

}  // namespace mrsr::train
