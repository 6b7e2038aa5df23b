#include <algorithm>
#include <fstream>
#include <iterator>

#include "stepcount/error.hpp"
#include "stepcount/ingest.hpp"
#include "stepcount/log.hpp"

namespace stepcount::ingest {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(Errc::IoFailure, "failed reading " + path.string());
    return contents;
}

void write_file(const fs::path& path, std::string_view contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(Errc::IoFailure, "failed writing " + path.string());
}

std::string walk_file_stem(const std::string& participant_id, const std::string& path_id)
{
    std::string stem = "P" + participant_id + "_" + path_id;
    for (char& ch : stem) {
        const bool safe = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                          ch == '_' || ch == '-' || ch == '.';
        if (!safe) ch = '-';
    }
    return stem;
}

std::vector<WalkRecord> load_dataset_dir(const fs::path& dir, const CsvOptions& options,
                                         const WalkerGroup* group_filter)
{
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) fail(Errc::IoFailure, dir.string() + " is not a directory");

    std::vector<fs::path> xml_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".xml") xml_files.push_back(entry.path());
    }
    std::sort(xml_files.begin(), xml_files.end());

    std::vector<WalkRecord> records;
    for (const auto& xml_path : xml_files) {
        WalkRecord rec;
        rec.xml_path = xml_path;
        rec.csv_path = fs::path(xml_path).replace_extension(".csv");
        try {
            rec.walk = parse_ground_truth_xml(read_file(xml_path));
            if (group_filter && rec.walk.walker_group != *group_filter) continue;
            if (!fs::exists(rec.csv_path)) fail(Errc::IoFailure, "missing sensor file " + rec.csv_path.string());
            rec.sensors = parse_sensor_csv(read_file(rec.csv_path), rec.walk.participant_id, rec.walk.path_id, options);
        } catch (const Error& e) {
            fail(e.code(), xml_path.filename().string() + ": " + e.detail());
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) log::warn("no walks loaded from ", dir.string());
    return records;
}

}  // namespace stepcount::ingest
