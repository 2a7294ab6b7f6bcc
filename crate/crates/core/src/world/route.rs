use super::{CityModel, IntersectionId, WorldError};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// A three-point navigation plan: drive from A to B, turn, continue to C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub stops: Vec<IntersectionId>,
    pub waypoints: Vec<Vec2>,
    pub target_intersection: IntersectionId,
    /// Unit driving direction of the A to B leg.
    pub approach_axis: Vec2,
}

impl Route {
    pub fn target_position(&self) -> Vec2 {
        self.waypoints[1]
    }

    /// Signed distance along the approach axis relative to the target intersection.
    /// Negative before the intersection.
    pub fn along_track(&self, p: Vec2) -> f64 {
        (p - self.target_position()).dot(self.approach_axis)
    }

    /// Point on the approach leg at along-track coordinate `along`, shifted `lateral`
    /// meters to the driver's right.
    pub fn approach_point(&self, along: f64, lateral: f64) -> Vec2 {
        self.target_position() + self.approach_axis * along + self.approach_axis.right() * lateral
    }

    pub fn approach_length(&self) -> f64 {
        self.waypoints[0].distance(self.waypoints[1])
    }

    /// Heading angle of the approach axis, counter-clockwise from +x.
    pub fn approach_yaw(&self) -> f64 {
        self.approach_axis.y.atan2(self.approach_axis.x)
    }
}

fn share_street(a: IntersectionId, b: IntersectionId) -> bool {
    a.ns == b.ns || a.ew == b.ew
}

pub fn make_route(
    city: &CityModel,
    from: IntersectionId,
    turn_at: IntersectionId,
    to: IntersectionId,
) -> Result<Route, WorldError> {
    let stops = [from, turn_at, to];
    let mut waypoints = Vec::with_capacity(3);
    for id in stops {
        let node = city
            .intersection(id)
            .ok_or_else(|| WorldError::Route(format!("no intersection {id}")))?;
        waypoints.push(node.position);
    }
    if from == turn_at || turn_at == to {
        return Err(WorldError::Route(format!(
            "degenerate route {from} -> {turn_at} -> {to}"
        )));
    }
    for pair in stops.windows(2) {
        if !share_street(pair[0], pair[1]) {
            return Err(WorldError::Route(format!(
                "{} and {} are not on a common street",
                pair[0], pair[1]
            )));
        }
    }
    let approach_axis = (waypoints[1] - waypoints[0]).normalized();
    Ok(Route {
        stops: stops.to_vec(),
        waypoints,
        target_intersection: turn_at,
        approach_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_city, BillboardConfig, CityConfig};
    use std::collections::{HashMap, VecDeque};

    fn grid3() -> CityModel {
        let cfg = CityConfig {
            ns_streets: 3,
            ew_streets: 3,
            billboard: BillboardConfig {
                intersection: IntersectionId::new(0, 1),
                ..Default::default()
            },
            ..Default::default()
        };
        generate_city(42, &cfg).unwrap()
    }

    fn bfs(city: &CityModel, a: IntersectionId, b: IntersectionId) -> Vec<IntersectionId> {
        // grid graph: neighbours differ by one index along a shared street
        let mut prev: HashMap<IntersectionId, IntersectionId> = HashMap::new();
        let mut q = VecDeque::from([a]);
        let exists = |id: IntersectionId| city.intersection(id).is_some();
        while let Some(n) = q.pop_front() {
            if n == b {
                break;
            }
            let mut next = vec![];
            if n.ns > 0 {
                next.push(IntersectionId::new(n.ns - 1, n.ew));
            }
            if n.ew > 0 {
                next.push(IntersectionId::new(n.ns, n.ew - 1));
            }
            next.push(IntersectionId::new(n.ns + 1, n.ew));
            next.push(IntersectionId::new(n.ns, n.ew + 1));
            for m in next {
                if exists(m) && m != a && !prev.contains_key(&m) {
                    prev.insert(m, n);
                    q.push_back(m);
                }
            }
        }
        let mut path = vec![b];
        while let Some(&p) = prev.get(path.last().unwrap()) {
            path.push(p);
        }
        path.reverse();
        path
    }

    #[test]
    fn corner_route_matches_shortest_paths() {
        let city = grid3();
        let (a, b, c) = (
            IntersectionId::new(0, 0),
            IntersectionId::new(0, 1),
            IntersectionId::new(1, 1),
        );
        let route = make_route(&city, a, b, c).unwrap();
        assert_eq!(bfs(&city, a, b), vec![a, b]);
        assert_eq!(bfs(&city, b, c), vec![b, c]);
        let pos = |id| city.intersection(id).unwrap().position;
        assert_eq!(route.waypoints, vec![pos(a), pos(b), pos(c)]);
        assert_eq!(route.target_intersection, b);
    }

    #[test]
    fn northbound_approach_axis() {
        let city = grid3();
        let route = make_route(
            &city,
            IntersectionId::new(1, 0),
            IntersectionId::new(1, 1),
            IntersectionId::new(0, 1),
        )
        .unwrap();
        assert_eq!(route.approach_axis, Vec2::new(0.0, 1.0));
        assert!(route.along_track(route.waypoints[0]) < 0.0);
        assert_eq!(route.along_track(route.waypoints[1]), 0.0);
    }

    #[test]
    fn degenerate_and_disconnected_routes_fail() {
        let city = grid3();
        let a = IntersectionId::new(0, 0);
        assert!(matches!(
            make_route(&city, a, a, IntersectionId::new(1, 0)),
            Err(WorldError::Route(_))
        ));
        assert!(matches!(
            make_route(&city, a, IntersectionId::new(1, 1), IntersectionId::new(1, 2)),
            Err(WorldError::Route(_))
        ));
        assert!(matches!(
            make_route(&city, a, IntersectionId::new(0, 1), IntersectionId::new(9, 1)),
            Err(WorldError::Route(_))
        ));
    }

    #[test]
    fn consecutive_waypoints_share_a_street_polygon() {
        let city = generate_city(5, &CityConfig::default()).unwrap();
        let route = make_route(
            &city,
            IntersectionId::new(1, 0),
            IntersectionId::new(1, 2),
            IntersectionId::new(2, 2),
        )
        .unwrap();
        for w in route.waypoints.windows(2) {
            let common = city.streets.iter().any(|s| {
                let r = s.carriageway();
                r.contains(w[0]) && r.contains(w[1])
            });
            assert!(common);
        }
    }
}
