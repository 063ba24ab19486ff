// MoNuSeg-layout ingestion: images plus same-stem polygon XML annotations.

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <set>
#include <stdexcept>

#include "tiseg/datakit.hpp"
#include "tiseg/imageio.hpp"

namespace tiseg {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

bool on_segment(const Point2& a, const Point2& b, double x, double y) {
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double px = x - a.x, py = y - a.y;
    const double len = std::hypot(ex, ey);
    if (len == 0.0) return px == 0.0 && py == 0.0;
    if (std::abs(ex * py - ey * px) > 1e-9 * len) return false;
    const double t = ex * px + ey * py;
    return t >= -1e-12 && t <= len * len + 1e-12;
}

void collect_vertices(const pt::ptree& node, AnnotationFile& out) {
    for (const auto& [name, child] : node) {
        if (name == "Vertices") {
            Polygon poly;
            for (const auto& [vname, v] : child) {
                if (vname != "Vertex") continue;
                poly.push_back({v.get<double>("<xmlattr>.X"), v.get<double>("<xmlattr>.Y")});
            }
            if (poly.size() < 3) ++out.skipped_regions;
            else out.polygons.push_back(std::move(poly));
        } else if (name != "<xmlattr>") {
            collect_vertices(child, out);
        }
    }
}

}  // namespace

bool point_in_polygon(const Polygon& poly, double x, double y) {
    const size_t n = poly.size();
    if (n < 3) return false;
    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2& a = poly[j];
        const Point2& b = poly[i];
        if (on_segment(a, b, x, y)) return true;
        if ((a.y > y) != (b.y > y)) {
            const double xint = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x < xint) inside = !inside;
        }
    }
    return inside;
}

std::vector<uint8_t> rasterize_polygons(std::span<const Polygon> polygons, int height, int width) {
    std::vector<uint8_t> mask(static_cast<size_t>(height) * width, 0);
    for (const auto& poly : polygons) {
        if (poly.size() < 3) continue;
        double minx = poly[0].x, maxx = poly[0].x, miny = poly[0].y, maxy = poly[0].y;
        for (const auto& p : poly) {
            minx = std::min(minx, p.x);
            maxx = std::max(maxx, p.x);
            miny = std::min(miny, p.y);
            maxy = std::max(maxy, p.y);
        }
        // Pixel centres sit at integer + 0.5.
        const int x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(maxx - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(maxy - 0.5)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                auto& m = mask[static_cast<size_t>(y) * width + x];
                if (!m && point_in_polygon(poly, x + 0.5, y + 0.5)) m = 1;
            }
    }
    return mask;
}

AnnotationFile parse_monuseg_xml(const fs::path& path) {
    pt::ptree tree;
    try {
        pt::read_xml(path.string(), tree);
    } catch (const pt::xml_parser_error& e) {
        throw std::runtime_error("cannot parse annotation " + path.string() + ": " + e.message());
    }
    AnnotationFile out;
    try {
        collect_vertices(tree, out);
    } catch (const pt::ptree_error& e) {
        throw std::runtime_error("malformed vertex in " + path.string() + ": " + e.what());
    }
    return out;
}

IngestResult ingest_monuseg(const fs::path& image_dir, const fs::path& annotation_dir, Source source) {
    if (!fs::is_directory(image_dir)) throw std::runtime_error("image directory " + image_dir.string() + " not found");
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(image_dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".tif" || ext == ".tiff") images.push_back(e.path());
    }
    std::sort(images.begin(), images.end());

    IngestResult res;
    std::set<std::string> seen;
    for (const auto& img : images) {
        const std::string stem = img.stem().string();
        if (!seen.insert(stem).second) {
            res.errors.push_back(stem + ": duplicate image stem");
            continue;
        }
        const fs::path xml = annotation_dir / (stem + ".xml");
        if (!fs::exists(xml)) {
            res.errors.push_back(stem + ": missing annotation " + xml.string());
            continue;
        }
        try {
            RgbImage rgb = load_rgb(img);
            AnnotationFile ann = parse_monuseg_xml(xml);
            ImageRecord r;
            r.id = stem;
            r.height = rgb.height;
            r.width = rgb.width;
            r.pixels = std::move(rgb.pixels);
            r.mask = rasterize_polygons(ann.polygons, r.height, r.width);
            r.source = source;
            r.nuclei = static_cast<int>(ann.polygons.size());
            if (ann.skipped_regions > 0)
                res.warnings.push_back(stem + ": skipped " + std::to_string(ann.skipped_regions) +
                                       " region(s) with fewer than 3 vertices");
            if (ann.polygons.empty()) res.warnings.push_back(stem + ": annotation has no regions (empty mask)");
            res.skipped_regions += ann.skipped_regions;
            res.total_nuclei += r.nuclei;
            res.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            res.errors.push_back(stem + ": " + e.what());
        }
    }
    return res;
}

}  // namespace tiseg
