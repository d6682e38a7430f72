#include "drocket/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace drocket {

namespace {

constexpr std::int64_t kMinTimesteps = 9;

std::filesystem::path header_path(const std::filesystem::path& path) {
    if (path.extension() == ".json") return path;
    std::filesystem::path p = path;
    p += ".json";
    return p;
}

std::filesystem::path payload_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    if (p.extension() == ".json") p.replace_extension();
    p += ".bin";
    return p;
}

// Explicit little-endian f32 encoding so the payload is identical on any host.
void write_f32_le(std::ostream& out, const std::vector<float>& values) {
    std::vector<unsigned char> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &values[i], 4);
        buf[4 * i + 0] = static_cast<unsigned char>(bits & 0xff);
        buf[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        buf[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        buf[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count) {
    std::vector<unsigned char> buf(count * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size())
        throw DataError("payload truncated: expected " + std::to_string(buf.size()) + " bytes");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
        std::memcpy(&values[i], &bits, 4);
    }
    return values;
}

Dataset load_dre_binary(const std::filesystem::path& path) {
    const auto hpath = header_path(path);
    std::ifstream hin(hpath);
    if (!hin) throw DataError("cannot open dataset header: " + hpath.string());
    nlohmann::json header;
    try {
        hin >> header;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed dataset header " + hpath.string() + ": " + e.what());
    }

    Dataset d;
    try {
        if (header.value("version", 0) != 1)
            throw DataError("unsupported dataset header version in " + hpath.string());
        if (header.value("dtype", "") != "f32")
            throw DataError("unsupported dtype in " + hpath.string());
        d.n_instances = header.at("n_instances").get<std::int64_t>();
        d.n_channels = header.at("n_channels").get<std::int64_t>();
        d.n_timesteps = header.at("n_timesteps").get<std::int64_t>();
        d.labels = header.at("labels").get<std::vector<std::int32_t>>();
        if (header.contains("subject_ids") && !header["subject_ids"].is_null())
            d.subject_ids = header["subject_ids"].get<std::vector<std::int32_t>>();
        if (header.contains("channel_names") && !header["channel_names"].is_null())
            d.channel_names = header["channel_names"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid dataset header " + hpath.string() + ": " + e.what());
    }

    const auto ppath = payload_path(path);
    std::ifstream pin(ppath, std::ios::binary);
    if (!pin) throw DataError("cannot open dataset payload: " + ppath.string());
    const auto expected = static_cast<std::size_t>(d.n_instances * d.n_channels * d.n_timesteps);
    pin.seekg(0, std::ios::end);
    const auto actual_bytes = static_cast<std::size_t>(pin.tellg());
    if (actual_bytes != expected * 4)
        throw DataError("header/payload size mismatch: header implies " + std::to_string(expected * 4) +
                        " bytes, payload has " + std::to_string(actual_bytes));
    pin.seekg(0, std::ios::beg);
    d.values = read_f32_le(pin, expected);
    d.validate();
    return d;
}

void save_dre_binary(const Dataset& d, const std::filesystem::path& path, const nlohmann::json& extra) {
    nlohmann::json header = {
        {"version", 1},
        {"n_instances", d.n_instances},
        {"n_channels", d.n_channels},
        {"n_timesteps", d.n_timesteps},
        {"labels", d.labels},
        {"subject_ids", d.subject_ids ? nlohmann::json(*d.subject_ids) : nlohmann::json(nullptr)},
        {"channel_names", d.channel_names ? nlohmann::json(*d.channel_names) : nlohmann::json(nullptr)},
        {"dtype", "f32"},
        {"order", "instance-major, channel-major within instance"},
    };
    for (const auto& [key, value] : extra.items()) header[key] = value;

    const auto hpath = header_path(path);
    std::ofstream hout(hpath);
    if (!hout) throw DataError("cannot write dataset header: " + hpath.string());
    hout << header.dump(2) << '\n';
    if (!hout) throw DataError("failed writing dataset header: " + hpath.string());

    const auto ppath = payload_path(path);
    std::ofstream pout(ppath, std::ios::binary);
    if (!pout) throw DataError("cannot write dataset payload: " + ppath.string());
    write_f32_le(pout, d.values);
    if (!pout) throw DataError("failed writing dataset payload: " + ppath.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("unknown " + what + " string: '" + s + "'");
    }
}

Dataset load_csv_long(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset csv: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty csv: " + path.string());
    auto cols = split_csv_line(line);
    const std::vector<std::string> base = {"instance_id", "channel", "timestep", "value", "label"};
    bool has_subject = false;
    if (cols.size() == 6 && cols[5] == "subject_id")
        has_subject = true;
    else if (cols.size() != 5)
        throw DataError("csv header must be instance_id,channel,timestep,value,label[,subject_id]");
    for (std::size_t i = 0; i < base.size(); ++i)
        if (cols[i] != base[i]) throw DataError("unexpected csv column '" + cols[i] + "'");

    struct Cell {
        std::int64_t channel, timestep;
        float value;
    };
    std::map<std::int64_t, std::vector<Cell>> cells;
    std::map<std::int64_t, std::int32_t> inst_label;
    std::map<std::int64_t, std::int32_t> inst_subject;

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != (has_subject ? 6u : 5u))
            throw DataError("csv row " + std::to_string(lineno) + " has wrong field count");
        const std::int64_t inst = parse_int(f[0], "instance_id");
        const std::int64_t chan = parse_int(f[1], "channel");
        const std::int64_t step = parse_int(f[2], "timestep");
        float value;
        try {
            value = std::stof(f[3]);
        } catch (const std::exception&) {
            throw DataError("bad value at csv row " + std::to_string(lineno));
        }
        const auto label = static_cast<std::int32_t>(parse_int(f[4], "label"));
        auto it = inst_label.find(inst);
        if (it == inst_label.end())
            inst_label[inst] = label;
        else if (it->second != label)
            throw DataError("conflicting labels for instance " + std::to_string(inst));
        if (has_subject) inst_subject[inst] = static_cast<std::int32_t>(parse_int(f[5], "subject_id"));
        cells[inst].push_back({chan, step, value});
    }
    if (cells.empty()) throw DataError("csv has no data rows: " + path.string());

    // Shape from the first instance; every instance must match it.
    std::int64_t n_channels = 0, n_timesteps = 0;
    for (const auto& [inst, cc] : cells) {
        std::set<std::int64_t> chans;
        std::map<std::int64_t, std::int64_t> steps_per_chan;
        for (const auto& cell : cc) {
            chans.insert(cell.channel);
            ++steps_per_chan[cell.channel];
        }
        const auto c = static_cast<std::int64_t>(chans.size());
        std::int64_t t = -1;
        for (const auto& [chan, cnt] : steps_per_chan) {
            if (t < 0)
                t = cnt;
            else if (t != cnt)
                throw DataError("ragged series length in instance " + std::to_string(inst));
        }
        if (n_channels == 0) {
            n_channels = c;
            n_timesteps = t;
        } else if (c != n_channels) {
            throw DataError("ragged channel count in instance " + std::to_string(inst));
        } else if (t != n_timesteps) {
            throw DataError("ragged series length in instance " + std::to_string(inst));
        }
    }

    Dataset d;
    d.n_instances = static_cast<std::int64_t>(cells.size());
    d.n_channels = n_channels;
    d.n_timesteps = n_timesteps;
    d.values.assign(static_cast<std::size_t>(d.n_instances * n_channels * n_timesteps),
                    std::numeric_limits<float>::quiet_NaN());
    d.labels.resize(static_cast<std::size_t>(d.n_instances));
    if (has_subject) d.subject_ids = std::vector<std::int32_t>(static_cast<std::size_t>(d.n_instances));

    std::int64_t row = 0;
    for (const auto& [inst, cc] : cells) {
        d.labels[static_cast<std::size_t>(row)] = inst_label.at(inst);
        if (has_subject) (*d.subject_ids)[static_cast<std::size_t>(row)] = inst_subject.at(inst);
        for (const auto& cell : cc) {
            if (cell.channel < 0 || cell.channel >= n_channels || cell.timestep < 0 ||
                cell.timestep >= n_timesteps)
                throw DataError("cell index out of range in instance " + std::to_string(inst));
            auto& slot = d.at(row, cell.channel, cell.timestep);
            if (!std::isnan(slot)) throw DataError("duplicate cell in instance " + std::to_string(inst));
            slot = cell.value;
        }
        ++row;
    }
    for (const float v : d.values)
        if (std::isnan(v)) throw DataError("missing cells in csv: " + path.string());
    d.validate();
    return d;
}

void save_csv_long(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset csv: " + path.string());
    out << "instance_id,channel,timestep,value,label";
    if (d.subject_ids) out << ",subject_id";
    out << '\n';
    char buf[64];
    for (std::int64_t i = 0; i < d.n_instances; ++i) {
        for (std::int64_t c = 0; c < d.n_channels; ++c) {
            for (std::int64_t t = 0; t < d.n_timesteps; ++t) {
                // %.9g round-trips any f32 exactly
                std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(d.at(i, c, t)));
                out << i << ',' << c << ',' << t << ',' << buf << ','
                    << d.labels[static_cast<std::size_t>(i)];
                if (d.subject_ids) out << ',' << (*d.subject_ids)[static_cast<std::size_t>(i)];
                out << '\n';
            }
        }
    }
    if (!out) throw DataError("failed writing dataset csv: " + path.string());
}

}  // namespace

std::vector<std::int32_t> Dataset::classes() const {
    std::vector<std::int32_t> cls(labels);
    std::sort(cls.begin(), cls.end());
    cls.erase(std::unique(cls.begin(), cls.end()), cls.end());
    return cls;
}

void Dataset::validate() const {
    if (n_instances <= 0 || n_channels <= 0 || n_timesteps <= 0)
        throw DataError("dataset dimensions must be positive");
    if (n_timesteps < kMinTimesteps)
        throw DataError("n_timesteps must be >= " + std::to_string(kMinTimesteps) + ", got " +
                        std::to_string(n_timesteps));
    const auto expected = static_cast<std::size_t>(n_instances * n_channels * n_timesteps);
    if (values.size() != expected) throw DataError("values size does not match dimensions");
    if (labels.size() != static_cast<std::size_t>(n_instances))
        throw DataError("labels length must equal n_instances");
    if (subject_ids && subject_ids->size() != static_cast<std::size_t>(n_instances))
        throw DataError("subject_ids length must equal n_instances");
    if (channel_names && channel_names->size() != static_cast<std::size_t>(n_channels))
        throw DataError("channel_names length must equal n_channels");
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    switch (format) {
        case DatasetFormat::DreBinary:
            return load_dre_binary(path);
        case DatasetFormat::CsvLong:
            return load_csv_long(path);
    }
    throw InvariantError("unreachable dataset format");
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path, DatasetFormat format,
                  const nlohmann::json& extra_header) {
    dataset.validate();
    switch (format) {
        case DatasetFormat::DreBinary:
            save_dre_binary(dataset, path, extra_header);
            return;
        case DatasetFormat::CsvLong:
            save_csv_long(dataset, path);
            return;
    }
    throw InvariantError("unreachable dataset format");
}

namespace {

Dataset take_rows(const Dataset& d, const std::vector<std::int64_t>& rows) {
    Dataset out;
    out.n_instances = static_cast<std::int64_t>(rows.size());
    out.n_channels = d.n_channels;
    out.n_timesteps = d.n_timesteps;
    out.channel_names = d.channel_names;
    const auto stride = static_cast<std::size_t>(d.n_channels * d.n_timesteps);
    out.values.resize(rows.size() * stride);
    out.labels.resize(rows.size());
    if (d.subject_ids) out.subject_ids = std::vector<std::int32_t>(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto i = static_cast<std::size_t>(rows[k]);
        std::copy_n(d.values.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                    out.values.begin() + static_cast<std::ptrdiff_t>(k * stride));
        out.labels[k] = d.labels[i];
        if (d.subject_ids) (*out.subject_ids)[k] = (*d.subject_ids)[i];
    }
    return out;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
    dataset.validate();
    if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0))
        throw std::invalid_argument("validation_fraction must be in (0,1)");
    if (spec.group_by_subject && !dataset.subject_ids)
        throw std::invalid_argument("group_by_subject requires subject_ids");

    const std::int64_t n = dataset.n_instances;
    Rng rng(spec.seed);
    std::vector<std::int64_t> val_rows;

    if (spec.group_by_subject) {
        std::vector<std::int32_t> subjects(*dataset.subject_ids);
        std::sort(subjects.begin(), subjects.end());
        subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
        if (subjects.size() < 2)
            throw std::invalid_argument("group_by_subject needs at least two subjects");
        rng.shuffle(subjects);
        const auto target = static_cast<std::int64_t>(std::llround(spec.validation_fraction * static_cast<double>(n)));
        std::set<std::int32_t> val_subjects;
        std::int64_t count = 0;
        for (const auto s : subjects) {
            if (count >= std::max<std::int64_t>(target, 1)) break;
            if (val_subjects.size() + 1 == subjects.size()) break;  // keep one subject in rest
            val_subjects.insert(s);
            count += std::count(dataset.subject_ids->begin(), dataset.subject_ids->end(), s);
        }
        if (val_subjects.empty()) val_subjects.insert(subjects.front());
        for (std::int64_t i = 0; i < n; ++i)
            if (val_subjects.count((*dataset.subject_ids)[static_cast<std::size_t>(i)]))
                val_rows.push_back(i);
    } else if (spec.stratified) {
        std::map<std::int32_t, std::vector<std::int64_t>> by_class;
        for (std::int64_t i = 0; i < n; ++i) by_class[dataset.labels[static_cast<std::size_t>(i)]].push_back(i);
        for (const auto& [cls, rows] : by_class)
            if (rows.size() < 2)
                throw std::invalid_argument("stratified split needs >=2 instances of class " + std::to_string(cls));
        for (auto& [cls, rows] : by_class) {
            auto shuffled = rows;
            rng.shuffle(shuffled);
            auto take = static_cast<std::int64_t>(
                std::llround(spec.validation_fraction * static_cast<double>(rows.size())));
            take = std::clamp<std::int64_t>(take, 1, static_cast<std::int64_t>(rows.size()) - 1);
            val_rows.insert(val_rows.end(), shuffled.begin(), shuffled.begin() + take);
        }
    } else {
        std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
        rng.shuffle(rows);
        auto take = static_cast<std::int64_t>(std::llround(spec.validation_fraction * static_cast<double>(n)));
        take = std::clamp<std::int64_t>(take, 1, n - 1);
        val_rows.assign(rows.begin(), rows.begin() + take);
    }

    std::sort(val_rows.begin(), val_rows.end());
    if (val_rows.empty() || static_cast<std::int64_t>(val_rows.size()) >= n)
        throw std::invalid_argument("validation_fraction leaves an empty part");

    std::vector<std::int64_t> rest_rows;
    rest_rows.reserve(static_cast<std::size_t>(n) - val_rows.size());
    std::size_t vi = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (vi < val_rows.size() && val_rows[vi] == i)
            ++vi;
        else
            rest_rows.push_back(i);
    }
    return {take_rows(dataset, rest_rows), take_rows(dataset, val_rows)};
}

std::pair<Dataset, ChannelStats> znormalize(const Dataset& dataset,
                                            const std::optional<ChannelStats>& stats) {
    dataset.validate();
    ChannelStats s;
    if (stats) {
        if (stats->mean.size() != static_cast<std::size_t>(dataset.n_channels) ||
            stats->stddev.size() != static_cast<std::size_t>(dataset.n_channels))
            throw DataError("normalization stats channel count mismatch: expected " +
                            std::to_string(dataset.n_channels) + ", got " +
                            std::to_string(stats->mean.size()));
        s = *stats;
    } else {
        const auto C = static_cast<std::size_t>(dataset.n_channels);
        s.mean.assign(C, 0.0);
        s.stddev.assign(C, 0.0);
        const double count = static_cast<double>(dataset.n_instances * dataset.n_timesteps);
        for (std::int64_t c = 0; c < dataset.n_channels; ++c) {
            double sum = 0.0;
            for (std::int64_t i = 0; i < dataset.n_instances; ++i) {
                const float* p = dataset.series(i, c);
                for (std::int64_t t = 0; t < dataset.n_timesteps; ++t) sum += p[t];
            }
            const double mean = sum / count;
            double sq = 0.0;
            for (std::int64_t i = 0; i < dataset.n_instances; ++i) {
                const float* p = dataset.series(i, c);
                for (std::int64_t t = 0; t < dataset.n_timesteps; ++t) {
                    const double dlt = p[t] - mean;
                    sq += dlt * dlt;
                }
            }
            s.mean[static_cast<std::size_t>(c)] = mean;
            s.stddev[static_cast<std::size_t>(c)] = std::sqrt(sq / count);
        }
    }

    std::pair<Dataset, ChannelStats> result(dataset, std::move(s));
    Dataset& out = result.first;
    const ChannelStats& st = result.second;
    for (std::int64_t c = 0; c < dataset.n_channels; ++c) {
        const double mean = st.mean[static_cast<std::size_t>(c)];
        const double sd = st.stddev[static_cast<std::size_t>(c)];
        const double scale = sd < 1e-12 ? 1.0 : 1.0 / sd;  // constant channels: shift only
        for (std::int64_t i = 0; i < dataset.n_instances; ++i) {
            const auto base = static_cast<std::size_t>((i * dataset.n_channels + c) * dataset.n_timesteps);
            for (std::int64_t t = 0; t < dataset.n_timesteps; ++t) {
                const double v = (static_cast<double>(dataset.values[base + static_cast<std::size_t>(t)]) - mean) * scale;
                out.values[base + static_cast<std::size_t>(t)] = static_cast<float>(v);
            }
        }
    }
    return result;
}

}  // namespace drocket
