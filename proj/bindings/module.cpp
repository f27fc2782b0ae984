// Python bindings for the core library. Grids cross the boundary as numpy
// arrays of shape (height, width); everything else mirrors the C++ API.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <variant>
#include <vector>

#include "flowlens/annotations.hpp"
#include "flowlens/components.hpp"
#include "flowlens/detection.hpp"
#include "flowlens/errors.hpp"
#include "flowlens/experiment.hpp"
#include "flowlens/flow.hpp"
#include "flowlens/grid.hpp"
#include "flowlens/grid_io.hpp"
#include "flowlens/phantom.hpp"
#include "flowlens/segmetrics.hpp"
#include "flowlens/stats.hpp"
#include "flowlens/transport.hpp"

namespace py = pybind11;
using namespace flowlens;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename Scalar, typename Array>
std::vector<Scalar> grid_values(const Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    const auto* data = a.data();
    return std::vector<Scalar>(data, data + a.size());
}

Image2D make_image(const DoubleArray& a, double spacing) {
    return Image2D(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), spacing,
                   grid_values<double>(a));
}

BinaryMask make_mask(const ByteArray& a, double spacing) {
    return BinaryMask(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), spacing,
                      grid_values<std::uint8_t>(a));
}

AnomalyMap make_map(const DoubleArray& a, double spacing) {
    return AnomalyMap(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), spacing,
                      grid_values<double>(a));
}

template <typename Grid, typename Scalar>
py::array to_numpy(const Grid& g, std::span<const Scalar> values) {
    py::array_t<Scalar> out({g.height(), g.width()});
    std::memcpy(out.mutable_data(), values.data(), values.size() * sizeof(Scalar));
    return out;
}

std::vector<double> as_vector(const DoubleArray& a) {
    const auto* data = a.data();
    return std::vector<double>(data, data + a.size());
}

py::array_t<double> vector_to_numpy(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Rectified-flow counterfactual anomaly workbench";

    // Exceptions. Derived classes register after the base so their
    // translators run first.
    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ParameterError>(m, "ParameterError", base);
    py::register_exception<ShapeError>(m, "ShapeError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<ParseError>(m, "ParseError", base);
    py::register_exception<IoError>(m, "IoError", base);
    py::register_exception<NumericError>(m, "NumericError", base);
    py::register_exception<GenerationError>(m, "GenerationError", base);

    // ---- grids ----------------------------------------------------------
    py::class_<Image2D>(m, "Image2D")
        .def(py::init(&make_image), py::arg("pixels"), py::arg("spacing") = 1.0)
        .def_property_readonly("width", &Image2D::width)
        .def_property_readonly("height", &Image2D::height)
        .def_property_readonly("spacing", &Image2D::spacing)
        .def("numpy", [](const Image2D& g) { return to_numpy(g, g.pixels()); })
        .def("at", &Image2D::at, py::arg("x"), py::arg("y"))
        .def("__len__", &Image2D::size)
        .def("__eq__", [](const Image2D& a, const Image2D& b) { return a == b; },
             py::is_operator());

    py::class_<BinaryMask>(m, "BinaryMask")
        .def(py::init(&make_mask), py::arg("pixels"), py::arg("spacing") = 1.0)
        .def_property_readonly("width", &BinaryMask::width)
        .def_property_readonly("height", &BinaryMask::height)
        .def_property_readonly("spacing", &BinaryMask::spacing)
        .def("numpy", [](const BinaryMask& g) { return to_numpy(g, g.pixels()); })
        .def("at", &BinaryMask::at, py::arg("x"), py::arg("y"))
        .def("area", &BinaryMask::area)
        .def("__len__", &BinaryMask::size)
        .def("__eq__", [](const BinaryMask& a, const BinaryMask& b) { return a == b; },
             py::is_operator());

    py::class_<AnomalyMap>(m, "AnomalyMap")
        .def(py::init(&make_map), py::arg("scores"), py::arg("spacing") = 1.0)
        .def_property_readonly("width", &AnomalyMap::width)
        .def_property_readonly("height", &AnomalyMap::height)
        .def_property_readonly("spacing", &AnomalyMap::spacing)
        .def("numpy", [](const AnomalyMap& g) { return to_numpy(g, g.scores()); })
        .def("at", &AnomalyMap::at, py::arg("x"), py::arg("y"))
        .def("__len__", &AnomalyMap::size)
        .def("__eq__", [](const AnomalyMap& a, const AnomalyMap& b) { return a == b; },
             py::is_operator());

    py::enum_<AnnotationLabel>(m, "AnnotationLabel")
        .value("Lesion", AnnotationLabel::Lesion)
        .value("NonLesional", AnnotationLabel::NonLesional);

    py::class_<PointAnnotation>(m, "PointAnnotation")
        .def(py::init([](double x, double y, AnnotationLabel label, std::string rater) {
                 return PointAnnotation{x, y, label, std::move(rater)};
             }),
             py::arg("x"), py::arg("y"), py::arg("label") = AnnotationLabel::Lesion,
             py::arg("rater") = std::string())
        .def_readwrite("x", &PointAnnotation::x)
        .def_readwrite("y", &PointAnnotation::y)
        .def_readwrite("label", &PointAnnotation::label)
        .def_readwrite("rater", &PointAnnotation::rater)
        .def("__eq__", [](const PointAnnotation& a, const PointAnnotation& b) { return a == b; },
             py::is_operator());

    py::class_<Subject>(m, "Subject")
        .def(py::init<std::string, Image2D, std::optional<BinaryMask>,
                      std::vector<PointAnnotation>>(),
             py::arg("id"), py::arg("image"), py::arg("lesion_mask") = std::nullopt,
             py::arg("annotations") = std::vector<PointAnnotation>())
        .def_readonly("id", &Subject::id)
        .def_readonly("image", &Subject::image)
        .def_readonly("lesion_mask", &Subject::lesion_mask)
        .def_readonly("annotations", &Subject::annotations);

    // ---- phantom ---------------------------------------------------------
    py::class_<Ellipse>(m, "Ellipse")
        .def(py::init<>())
        .def_readwrite("cx", &Ellipse::cx)
        .def_readwrite("cy", &Ellipse::cy)
        .def_readwrite("rx", &Ellipse::rx)
        .def_readwrite("ry", &Ellipse::ry)
        .def_readwrite("intensity", &Ellipse::intensity)
        .def("contains", &Ellipse::contains, py::arg("x"), py::arg("y"))
        .def("radial", &Ellipse::radial, py::arg("x"), py::arg("y"));

    py::class_<PhantomParams>(m, "PhantomParams")
        .def(py::init<>())
        .def_readwrite("size", &PhantomParams::size)
        .def_readwrite("outer", &PhantomParams::outer)
        .def_readwrite("tissues", &PhantomParams::tissues)
        .def_readwrite("ventricle", &PhantomParams::ventricle)
        .def_readwrite("noise_sigma", &PhantomParams::noise_sigma)
        .def_readwrite("seed", &PhantomParams::seed);

    m.def("sample_phantom_params", &sample_phantom_params, py::arg("size"),
          py::arg("noise_sigma"), py::arg("seed"));
    m.def("gen_healthy", &gen_healthy, py::arg("params"));
    m.def("brain_mask", &brain_mask, py::arg("image"));

    py::class_<LesionParams>(m, "LesionParams")
        .def(py::init<>())
        .def_readwrite("count_min", &LesionParams::count_min)
        .def_readwrite("count_max", &LesionParams::count_max)
        .def_readwrite("radius_min", &LesionParams::radius_min)
        .def_readwrite("radius_max", &LesionParams::radius_max)
        .def_readwrite("delta_min", &LesionParams::delta_min)
        .def_readwrite("delta_max", &LesionParams::delta_max)
        .def_readwrite("softness", &LesionParams::softness)
        .def("min_abs_delta", &LesionParams::min_abs_delta);

    py::class_<LesionInjection>(m, "LesionInjection")
        .def_readonly("image", &LesionInjection::image)
        .def_readonly("mask", &LesionInjection::mask);

    m.def("inject_lesion", &inject_lesion, py::arg("image"), py::arg("params"), py::arg("seed"));

    py::enum_<SubtleKind>(m, "SubtleKind")
        .value("VentricleEnlargement", SubtleKind::VentricleEnlargement)
        .value("SulcalWidening", SubtleKind::SulcalWidening)
        .value("PeriventricularHypo", SubtleKind::PeriventricularHypo);

    py::class_<SubtleParams>(m, "SubtleParams")
        .def(py::init<>())
        .def_readwrite("kind", &SubtleParams::kind)
        .def_readwrite("magnitude_min", &SubtleParams::magnitude_min)
        .def_readwrite("magnitude_max", &SubtleParams::magnitude_max);

    py::class_<SubtleInjection>(m, "SubtleInjection")
        .def_readonly("image", &SubtleInjection::image)
        .def_readonly("annotations", &SubtleInjection::annotations);

    m.def("inject_subtle", &inject_subtle, py::arg("image"), py::arg("params"),
          py::arg("phantom"), py::arg("seed"));
    m.def("mean_abs_change", &mean_abs_change, py::arg("before"), py::arg("after"));

    py::enum_<Split>(m, "Split")
        .value("Train", Split::Train)
        .value("Val", Split::Val)
        .value("Test", Split::Test);

    py::class_<DatasetEntry>(m, "DatasetEntry")
        .def_readonly("subject", &DatasetEntry::subject)
        .def_readonly("contaminated_image", &DatasetEntry::contaminated_image)
        .def_readonly("phantom", &DatasetEntry::phantom)
        .def_readonly("split", &DatasetEntry::split)
        .def_readonly("contaminated", &DatasetEntry::contaminated)
        .def_readonly("normal", &DatasetEntry::normal);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("entries", &Dataset::entries)
        .def("split", [](const Dataset& ds, Split s) {
            std::vector<DatasetEntry> out;
            for (const DatasetEntry* e : ds.split(s)) out.push_back(*e);
            return out;
        }, py::arg("split"));

    py::class_<DatasetParams>(m, "DatasetParams")
        .def(py::init<>())
        .def_readwrite("n_subjects", &DatasetParams::n_subjects)
        .def_readwrite("phantom_size", &DatasetParams::phantom_size)
        .def_readwrite("noise_sigma", &DatasetParams::noise_sigma)
        .def_readwrite("lesion", &DatasetParams::lesion)
        .def_readwrite("subtle", &DatasetParams::subtle)
        .def_readwrite("contamination_fraction", &DatasetParams::contamination_fraction)
        .def_readwrite("p_lesion", &DatasetParams::p_lesion)
        .def_readwrite("p_subtle", &DatasetParams::p_subtle)
        .def_readwrite("p_normal", &DatasetParams::p_normal)
        .def_readwrite("seed", &DatasetParams::seed);

    m.def("make_dataset", &make_dataset, py::arg("params"));
    m.def("write_dataset", &write_dataset, py::arg("dir"), py::arg("dataset"), py::arg("params"));

    py::class_<StoredDataset>(m, "StoredDataset")
        .def_readonly("params", &StoredDataset::params)
        .def_readonly("dataset", &StoredDataset::dataset);

    m.def("read_dataset", &read_dataset, py::arg("dir"));

    // ---- flow ------------------------------------------------------------
    py::class_<FlowModel>(m, "FlowModel")
        .def(py::init<std::vector<int>, int>(), py::arg("widths"), py::arg("time_pairs") = 4)
        .def_property_readonly("widths",
                               [](const FlowModel& f) { return f.widths(); })
        .def_property_readonly("time_pairs", &FlowModel::time_pairs)
        .def_property_readonly("pixel_input", &FlowModel::pixel_input)
        .def_property_readonly("output_size", &FlowModel::output_size)
        .def_property_readonly("param_count", &FlowModel::param_count)
        .def("params",
             [](const FlowModel& f) {
                 return vector_to_numpy({f.params().begin(), f.params().end()});
             })
        .def("set_params",
             [](FlowModel& f, const DoubleArray& p) { f.set_params(as_vector(p)); },
             py::arg("params"))
        .def("randomize", &FlowModel::randomize, py::arg("seed"))
        .def("forward",
             [](const FlowModel& f, const DoubleArray& x, double t) {
                 return vector_to_numpy(f.forward(as_vector(x), t));
             },
             py::arg("x"), py::arg("t"));

    py::class_<FlowPair>(m, "FlowPair")
        .def(py::init<Image2D, Image2D>(), py::arg("x0"), py::arg("x1"))
        .def_readonly("x0", &FlowPair::x0)
        .def_readonly("x1", &FlowPair::x1);

    py::enum_<Optimizer>(m, "Optimizer")
        .value("Sgd", Optimizer::Sgd)
        .value("SgdMomentum", Optimizer::SgdMomentum);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("t_samples", &TrainConfig::t_samples)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("optimizer", &TrainConfig::optimizer)
        .def_readwrite("momentum", &TrainConfig::momentum);

    py::class_<LossAndGrad>(m, "LossAndGrad")
        .def_readonly("loss", &LossAndGrad::loss)
        .def_property_readonly("grads",
                               [](const LossAndGrad& lg) { return vector_to_numpy(lg.grads); });

    m.def("rf_loss", &rf_loss, py::arg("model"), py::arg("pair"), py::arg("t"));

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("model", &TrainResult::model)
        .def_readonly("history", &TrainResult::history);

    m.def("train",
          [](const FlowModel& model, const std::vector<FlowPair>& pairs, const TrainConfig& cfg) {
              return train(model, pairs, cfg);
          },
          py::arg("model"), py::arg("pairs"), py::arg("config") = TrainConfig{});

    m.def("save_model", &save_model, py::arg("path"), py::arg("model"));
    m.def("load_model", &load_model, py::arg("path"));

    // ---- transport ---------------------------------------------------------
    py::class_<TransportConfig>(m, "TransportConfig")
        .def(py::init<>())
        .def_readwrite("steps", &TransportConfig::steps);

    m.def("reconstruct", &reconstruct, py::arg("model"), py::arg("image"),
          py::arg("config") = TransportConfig{});
    m.def("anomaly_map", &anomaly_map, py::arg("input"), py::arg("recon"));

    // ---- segmentation metrics ---------------------------------------------
    m.def("percentile",
          [](const DoubleArray& values, double p) { return percentile(as_vector(values), p); },
          py::arg("values"), py::arg("p"));
    m.def("dice", &dice, py::arg("pred"), py::arg("gt"));

    py::class_<SurfaceDistances>(m, "SurfaceDistances")
        .def_readonly("hd95", &SurfaceDistances::hd95)
        .def_readonly("asd", &SurfaceDistances::asd);

    m.def("surface_distances", &surface_distances, py::arg("pred"), py::arg("gt"));

    py::class_<LesionF1>(m, "LesionF1")
        .def_readonly("f1", &LesionF1::f1)
        .def_readonly("tp", &LesionF1::tp)
        .def_readonly("fp", &LesionF1::fp)
        .def_readonly("fn", &LesionF1::fn);

    m.def("lesion_f1", &lesion_f1, py::arg("pred"), py::arg("gt"), py::arg("overlap") = 0.10);

    py::enum_<SizeStratum>(m, "SizeStratum")
        .value("S", SizeStratum::S)
        .value("M", SizeStratum::M)
        .value("L", SizeStratum::L);

    py::class_<StrataThresholds>(m, "StrataThresholds")
        .def_readonly("q25", &StrataThresholds::q25)
        .def_readonly("q75", &StrataThresholds::q75)
        .def("classify", &StrataThresholds::classify, py::arg("area"));

    m.def("size_strata",
          [](const DoubleArray& areas) { return size_strata(as_vector(areas)); },
          py::arg("areas"));

    m.def("binarize", &binarize, py::arg("map"), py::arg("threshold"));
    m.def("select_threshold",
          [](const std::vector<AnomalyMap>& maps, const std::vector<BinaryMask>& gts,
             const DoubleArray& grid) { return select_threshold(maps, gts, as_vector(grid)); },
          py::arg("maps"), py::arg("gts"), py::arg("grid"));

    py::class_<SegSubjectRow>(m, "SegSubjectRow")
        .def_readonly("id", &SegSubjectRow::id)
        .def_readonly("gt_area", &SegSubjectRow::gt_area)
        .def_readonly("stratum", &SegSubjectRow::stratum)
        .def_readonly("dice", &SegSubjectRow::dice)
        .def_readonly("hd95", &SegSubjectRow::hd95)
        .def_readonly("asd", &SegSubjectRow::asd)
        .def_readonly("tp", &SegSubjectRow::tp)
        .def_readonly("fp", &SegSubjectRow::fp)
        .def_readonly("fn", &SegSubjectRow::fn);

    py::class_<SegAggregate>(m, "SegAggregate")
        .def_readonly("n", &SegAggregate::n)
        .def_readonly("mean_dice", &SegAggregate::mean_dice)
        .def_readonly("mean_hd95", &SegAggregate::mean_hd95)
        .def_readonly("mean_asd", &SegAggregate::mean_asd)
        .def_readonly("surface_excluded", &SegAggregate::surface_excluded)
        .def_readonly("tp", &SegAggregate::tp)
        .def_readonly("fp", &SegAggregate::fp)
        .def_readonly("fn", &SegAggregate::fn)
        .def_readonly("f1", &SegAggregate::f1);

    py::class_<SegReport>(m, "SegReport")
        .def_readonly("subjects", &SegReport::subjects)
        .def_readonly("strata", &SegReport::strata)
        .def_readonly("overall", &SegReport::overall)
        .def_readonly("by_stratum", &SegReport::by_stratum)
        .def_readonly("excluded_empty_gt", &SegReport::excluded_empty_gt);

    m.def("evaluate_segmentation",
          [](const std::vector<std::string>& ids, const std::vector<AnomalyMap>& maps,
             const std::vector<BinaryMask>& gts, double threshold, double overlap) {
              return evaluate_segmentation(ids, maps, gts, threshold, overlap);
          },
          py::arg("ids"), py::arg("maps"), py::arg("gts"), py::arg("threshold"),
          py::arg("overlap") = 0.10);

    // ---- detection ----------------------------------------------------------
    m.def("label_components", &label_components, py::arg("mask"));

    py::class_<Component>(m, "Component")
        .def(py::init([](std::vector<Pixel> pixels, double confidence) {
                 Component c;
                 c.pixels = std::move(pixels);
                 c.area = static_cast<int>(c.pixels.size());
                 c.confidence = confidence;
                 return c;
             }),
             py::arg("pixels"), py::arg("confidence"))
        .def_readonly("pixels", &Component::pixels)
        .def_readonly("area", &Component::area)
        .def_readonly("confidence", &Component::confidence);

    m.def("connected_components", &connected_components, py::arg("mask"), py::arg("map"));
    m.def("calibrate_threshold_pool",
          [](const DoubleArray& scores) { return calibrate_threshold_pool(as_vector(scores)); },
          py::arg("scores"));
    m.def("calibrate_threshold",
          [](const std::vector<AnomalyMap>& maps) { return calibrate_threshold(maps); },
          py::arg("normal_maps"));

    py::class_<MatchResult>(m, "MatchResult")
        .def_readonly("point_detected", &MatchResult::point_detected)
        .def_readonly("component_tp", &MatchResult::component_tp);

    m.def("match",
          [](const std::vector<Component>& components, const std::vector<PointAnnotation>& points,
             double tolerance) { return match(components, points, tolerance); },
          py::arg("components"), py::arg("points"), py::arg("tolerance"));

    py::class_<FrocPoint>(m, "FrocPoint")
        .def_readonly("fppi", &FrocPoint::fppi)
        .def_readonly("sensitivity", &FrocPoint::sensitivity);

    py::class_<FrocCurve>(m, "FrocCurve").def_readonly("points", &FrocCurve::points);

    py::class_<FrocSubject>(m, "FrocSubject")
        .def(py::init([](std::vector<Component> components, std::vector<PointAnnotation> points) {
                 return FrocSubject{std::move(components), std::move(points)};
             }),
             py::arg("components"), py::arg("points"))
        .def_readonly("components", &FrocSubject::components)
        .def_readonly("points", &FrocSubject::points);

    m.def("froc_curve",
          [](const std::vector<FrocSubject>& subjects, int n_images, double tolerance) {
              return froc_curve(subjects, n_images, tolerance);
          },
          py::arg("subjects"), py::arg("n_images"), py::arg("tolerance") = 5.0);
    m.def("froc_score",
          [](const FrocCurve& curve, const DoubleArray& levels) {
              return froc_score(curve, as_vector(levels));
          },
          py::arg("curve"), py::arg("levels"));

    py::enum_<LabelFilter>(m, "LabelFilter")
        .value("All", LabelFilter::All)
        .value("LesionOnly", LabelFilter::LesionOnly)
        .value("NonLesionalOnly", LabelFilter::NonLesionalOnly);

    py::class_<DetectionConfig>(m, "DetectionConfig")
        .def(py::init<>())
        .def_readwrite("binarize_thresholds", &DetectionConfig::binarize_thresholds)
        .def_readwrite("match_tolerance", &DetectionConfig::match_tolerance)
        .def_readwrite("fppi_levels", &DetectionConfig::fppi_levels);

    py::class_<DetectionRow>(m, "DetectionRow")
        .def_readonly("threshold", &DetectionRow::threshold)
        .def_readonly("filter", &DetectionRow::filter)
        .def_readonly("froc", &DetectionRow::froc)
        .def_readonly("n_images", &DetectionRow::n_images)
        .def_readonly("n_excluded", &DetectionRow::n_excluded)
        .def_readonly("n_points", &DetectionRow::n_points)
        .def_readonly("curve", &DetectionRow::curve);

    m.def("evaluate_detection",
          [](const std::vector<AnomalyMap>& maps,
             const std::vector<std::vector<PointAnnotation>>& annotations,
             const DetectionConfig& cfg, std::optional<std::vector<LabelFilter>> filters) {
              return filters ? evaluate_detection(maps, annotations, cfg, *filters)
                             : evaluate_detection(maps, annotations, cfg);
          },
          py::arg("maps"), py::arg("annotations"), py::arg("config") = DetectionConfig{},
          py::arg("filters") = py::none());

    // ---- annotations ---------------------------------------------------------
    m.def("merge_raters",
          [](const std::vector<PointAnnotation>& a, const std::vector<PointAnnotation>& b,
             double radius) { return merge_raters(a, b, radius); },
          py::arg("a"), py::arg("b"), py::arg("radius") = 5.0);

    py::class_<AnnotationSet>(m, "AnnotationSet")
        .def(py::init<>())
        .def_readwrite("subject_order", &AnnotationSet::subject_order)
        .def_readwrite("by_subject", &AnnotationSet::by_subject)
        .def("of", &AnnotationSet::of, py::arg("id"),
             py::return_value_policy::reference_internal);

    m.def("read_annotations", &read_annotations, py::arg("path"));
    m.def("write_annotations", &write_annotations, py::arg("path"), py::arg("set"));

    // ---- grid io ---------------------------------------------------------------
    m.def("write_grid", [](const std::filesystem::path& p, const Image2D& g) { write_grid(p, g); },
          py::arg("path"), py::arg("grid"));
    m.def("write_grid",
          [](const std::filesystem::path& p, const BinaryMask& g) { write_grid(p, g); },
          py::arg("path"), py::arg("grid"));
    m.def("write_grid",
          [](const std::filesystem::path& p, const AnomalyMap& g) { write_grid(p, g); },
          py::arg("path"), py::arg("grid"));
    m.def("read_grid", [](const std::filesystem::path& p) -> py::object {
        return std::visit([](const auto& g) { return py::cast(g); }, read_grid(p));
    }, py::arg("path"));
    m.def("read_image", &read_image, py::arg("path"));
    m.def("read_mask", &read_mask, py::arg("path"));
    m.def("read_anomaly_map", &read_anomaly_map, py::arg("path"));

    // ---- stats -------------------------------------------------------------------
    py::enum_<WilcoxonMethod>(m, "WilcoxonMethod")
        .value("Exact", WilcoxonMethod::Exact)
        .value("NormalApprox", WilcoxonMethod::NormalApprox);

    py::class_<WilcoxonResult>(m, "WilcoxonResult")
        .def_readonly("w", &WilcoxonResult::w)
        .def_readonly("n_effective", &WilcoxonResult::n_effective)
        .def_readonly("p", &WilcoxonResult::p)
        .def_readonly("method", &WilcoxonResult::method);

    m.def("wilcoxon_signed_rank",
          [](const DoubleArray& x, const DoubleArray& y) {
              return wilcoxon_signed_rank(as_vector(x), as_vector(y));
          },
          py::arg("x"), py::arg("y"));

    // ---- experiment ----------------------------------------------------------------
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("hidden", &ModelConfig::hidden)
        .def_readwrite("time_pairs", &ModelConfig::time_pairs)
        .def_readwrite("init_seed", &ModelConfig::init_seed);

    py::class_<PairingConfig>(m, "PairingConfig")
        .def(py::init<>())
        .def_readwrite("pairs_per_subject", &PairingConfig::pairs_per_subject)
        .def_readwrite("seed", &PairingConfig::seed)
        .def_readwrite("lesion", &PairingConfig::lesion);

    m.def("build_training_pairs", &build_training_pairs, py::arg("dataset"), py::arg("config"),
          py::arg("use_contaminated"));

    py::class_<SegEvalConfig>(m, "SegEvalConfig")
        .def(py::init<>())
        .def_readwrite("threshold_grid", &SegEvalConfig::threshold_grid)
        .def_readwrite("overlap", &SegEvalConfig::overlap);

    m.def("default_seg_grid", &default_seg_grid);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("out_dir", &ExperimentConfig::out_dir)
        .def_readwrite("dataset", &ExperimentConfig::dataset)
        .def_readwrite("model", &ExperimentConfig::model)
        .def_readwrite("pairing", &ExperimentConfig::pairing)
        .def_readwrite("train_clean", &ExperimentConfig::train_clean)
        .def_readwrite("train_contaminated", &ExperimentConfig::train_contaminated)
        .def_readwrite("transport", &ExperimentConfig::transport)
        .def_readwrite("detection", &ExperimentConfig::detection)
        .def_readwrite("calibrate_detection", &ExperimentConfig::calibrate_detection)
        .def_readwrite("seg", &ExperimentConfig::seg);

    m.def("experiment_config_from_json", &experiment_config_from_json, py::arg("text"));
    m.def("experiment_config_to_json", &experiment_config_to_json, py::arg("config"));

    py::class_<VariantReport>(m, "VariantReport")
        .def_readonly("name", &VariantReport::name)
        .def_readonly("loss_history", &VariantReport::loss_history)
        .def_readonly("seg_threshold", &VariantReport::seg_threshold)
        .def_readonly("seg", &VariantReport::seg)
        .def_readonly("calibrated_threshold", &VariantReport::calibrated_threshold)
        .def_readonly("detection", &VariantReport::detection);

    py::class_<ExperimentReport>(m, "ExperimentReport")
        .def_readonly("clean", &ExperimentReport::clean)
        .def_readonly("contaminated", &ExperimentReport::contaminated)
        .def_readonly("dice_test", &ExperimentReport::dice_test)
        .def_readonly("hd95_test", &ExperimentReport::hd95_test)
        .def_readonly("asd_test", &ExperimentReport::asd_test)
        .def_readonly("f1_test", &ExperimentReport::f1_test);

    m.def("run_experiment", &run_experiment, py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
}
